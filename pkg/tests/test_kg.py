from __future__ import annotations

import json
import random
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import clean_graph, gold_graphs, random_graph, relabel
from logkg.errors import SyntacticError
from logkg.kg import (
    EMPTY_GRAPH,
    KGNode,
    Literal,
    Provenance,
    canonicalize,
    entity_key,
    graph_from_json,
    graph_to_json,
    make_graph,
    normalize_literal,
    parse_datetime,
    parse_structured_output,
    to_triples,
)


def test_minimal_payload():
    g = parse_structured_output('{"nodes":[{"id":"e1","type":"Event","properties":{}}],"relationships":[]}')
    assert len(g.nodes) == 1 and g.nodes[0].node_type == "Event"
    assert g.provenance is None


def test_dangling_endpoint_parses():
    raw = json.dumps({
        "nodes": [{"id": "e1", "type": "Event", "properties": {}}],
        "relationships": [{"source": "e1", "target": "x9", "type": "hasParameter"}],
    })
    g = parse_structured_output(raw)
    assert g.relationships[0].target_id == "x9"


@pytest.mark.parametrize(
    "raw",
    [
        '{"nodes":[',
        "",
        "[]",
        '{"nodes":[]}',
        '{"relationships":[]}',
        '{"nodes":[],"relationships":[],"extra":1}',
        '{"nodes":[],"relationships":[],"provenance":{}}',
        '{"nodes":{},"relationships":[]}',
        '{"nodes":[{"id":"a","type":"Event"},{"id":"a","type":"Port"}],"relationships":[]}',
        '{"nodes":[{"id":"","type":"Event"}],"relationships":[]}',
        '{"nodes":[{"id":"a"}],"relationships":[]}',
        '{"nodes":[{"id":"a","type":"Event","properties":{"x":null}}],"relationships":[]}',
        '{"nodes":[{"id":"a","type":"Event","properties":{"x":{"y":1}}}],"relationships":[]}',
        '{"nodes":[{"id":"a","type":"Event","properties":{"x":[]}}],"relationships":[]}',
        '{"nodes":[{"id":"a","type":"Event","properties":{"x":NaN}}],"relationships":[]}',
        '{"nodes":[{"id":"a","type":"Event","label":"x"}],"relationships":[]}',
        '{"nodes":[],"relationships":[{"source":"a","target":"b"}]}',
        '{"nodes":[],"relationships":[{"source":"a","target":"b","type":"r","w":1}]}',
    ],
)
def test_strict_parsing_rejects(raw):
    with pytest.raises(SyntacticError) as info:
        parse_structured_output(raw)
    assert info.value.reason


def test_code_fences_are_tolerated():
    g = clean_graph()
    fenced = "```json\n" + graph_to_json(g, provenance=False) + "\n```"
    assert canonicalize(parse_structured_output(fenced)) == canonicalize(g.with_provenance(None))


def test_empty_graph_triples():
    assert to_triples(EMPTY_GRAPH) == set()
    assert EMPTY_GRAPH.is_empty


def test_single_node_expansion():
    g = make_graph([("e", "Event", {"eventMessage": "x"})])
    key = entity_key(g.nodes[0])
    assert key.node_type == "Event"
    triples = to_triples(g)
    assert len(triples) == 1
    (t,) = triples
    assert (t.subject, t.predicate, t.object) == (key, "eventMessage", Literal("string", "x"))


def test_ids_do_not_matter():
    a = make_graph(
        [("e1", "Event", {"eventMessage": "m"}), ("p1", "Port", {"portNumber": 22})], [("e1", "hasParameter", "p1")]
    )
    b = make_graph(
        [("zz", "Port", {"portNumber": 22}), ("q", "Event", {"eventMessage": "m"})], [("q", "hasParameter", "zz")]
    )
    assert to_triples(a) == to_triples(b)


def test_triple_count_with_distinct_keys():
    g = clean_graph()
    expected = sum(len(n.values(p)) for n in g.nodes for p in n.properties) + len(g.relationships)
    assert len(to_triples(g)) == expected


def test_duplicate_keys_collapse():
    g = make_graph(
        [("e", "Event", {"eventMessage": "m"}), ("p1", "Port", {"portNumber": 22}), ("p2", "Port", {"portNumber": 22})],
        [("e", "hasParameter", "p1"), ("e", "hasParameter", "p2")],
    )
    # two property triples collapse into one, as do the two edges
    assert len(to_triples(g)) == 3


def test_literal_normalisation():
    assert normalize_literal(" x ") == Literal("string", "x")
    assert normalize_literal(True) == Literal("boolean", "true")
    assert normalize_literal(2.0) == normalize_literal(2)
    assert normalize_literal("2022-01-24T10:18:51Z") == normalize_literal("24/Jan/2022:10:18:51 +0000")
    assert normalize_literal("2022-01-24T11:18:51+01:00") == normalize_literal("2022-01-24T10:18:51Z")
    assert normalize_literal("2022-01-24 10:18:51,000").kind == "datetime"
    assert parse_datetime("not a date") is None


def test_list_values_are_multisets():
    a = make_graph([("f", "File", {"fileHash": ["b", "a"]})])
    b = make_graph([("g", "File", {"fileHash": ["a", "b"]})])
    assert entity_key(a.nodes[0]) == entity_key(b.nodes[0])
    assert canonicalize(a).nodes[0].properties["fileHash"] == ("a", "b")


def test_canonicalize_is_order_independent():
    g = clean_graph()
    rng = random.Random(3)
    for _ in range(20):
        nodes, rels = list(g.nodes), list(g.relationships)
        rng.shuffle(nodes)
        rng.shuffle(rels)
        assert canonicalize(g.__class__(tuple(nodes), tuple(rels))) == canonicalize(g)


def test_golden_round_trip():
    prov = Provenance("raw", "ctx", "s1", datetime(2024, 1, 1, tzinfo=timezone.utc), "stub", 2)
    for g in gold_graphs():
        c = canonicalize(g.with_provenance(prov))
        text = graph_to_json(c)
        again = canonicalize(graph_from_json(text))
        assert again == c
        assert graph_to_json(again) == text


def test_wire_field_spellings():
    doc = json.loads(graph_to_json(clean_graph(), provenance=False))
    assert set(doc) == {"nodes", "relationships"}
    assert set(doc["nodes"][0]) == {"id", "type", "properties"}
    assert set(doc["relationships"][0]) == {"source", "target", "type"}


def test_node_values():
    n = KGNode("f", "File", {"fileHash": ("a", "b"), "filePath": "/x"})
    assert n.values("fileHash") == ("a", "b")
    assert n.values("filePath") == ("/x",)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_canonicalize_idempotent_and_round_trip(seed):
    g = random_graph(random.Random(seed))
    c = canonicalize(g)
    assert canonicalize(c) == c
    assert canonicalize(parse_structured_output(graph_to_json(c, provenance=False))) == c


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_triples_invariant_under_relabeling(seed):
    rng = random.Random(seed)
    g = random_graph(rng)
    assert to_triples(relabel(g, rng)) == to_triples(g)
