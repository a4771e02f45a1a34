from __future__ import annotations

import json
import os
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from helpers import clean_graph, gold_graphs
from logkg.errors import NotFound, StorageError
from logkg.kg import EMPTY_GRAPH, Provenance, canonicalize, graph_to_json
from logkg.ontology import load_ontology
from logkg.store import GRAPHS_FILE, GraphStore, graph_id

SCHEMA = load_ontology()
GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("LOGKG_REGEN_GOLDEN") == "1"
T0 = datetime(2024, 5, 1, 8, 0, tzinfo=timezone.utc)


def _with_prov(g, raw, session=None, minutes=0):
    return g.with_provenance(Provenance(raw, session_key=session, generated_at=T0 + timedelta(minutes=minutes)))


def test_round_trip_is_bit_exact(tmp_path):
    store = GraphStore(tmp_path)
    g = _with_prov(clean_graph(), "raw line")
    gid = store.persist_graph(g, created_at=T0)
    fetched = store.fetch_graph(gid)
    assert graph_to_json(fetched.graph) == graph_to_json(canonicalize(g))
    again = GraphStore(tmp_path).fetch_graph(gid)
    assert graph_to_json(again.graph) == graph_to_json(canonicalize(g))
    assert again.created_at == T0


def test_persist_is_idempotent(tmp_path):
    store = GraphStore(tmp_path)
    g = _with_prov(clean_graph(), "raw")
    assert store.persist_graph(g) == store.persist_graph(canonicalize(g))
    assert len(store) == 1
    assert len((tmp_path / GRAPHS_FILE).read_text(encoding="utf-8").splitlines()) == 1


def test_id_depends_on_provenance():
    assert graph_id(_with_prov(clean_graph(), "a")) != graph_id(_with_prov(clean_graph(), "b"))
    assert len(graph_id(clean_graph())) == 20


def test_empty_graph_failure_marker(tmp_path):
    store = GraphStore(tmp_path)
    gid = store.persist_graph(_with_prov(EMPTY_GRAPH, "bad line"))
    assert store.fetch_graph(gid).failed
    doc = json.loads((tmp_path / GRAPHS_FILE).read_text(encoding="utf-8"))
    assert doc["failed"] is True and doc["graph"]["nodes"] == []


def test_not_found():
    with pytest.raises(NotFound):
        GraphStore().fetch_graph("nope")


def test_list_by_session_counts_and_order(tmp_path):
    store = GraphStore(tmp_path)
    graphs = gold_graphs()[:5]
    plan = [("s1", 4), ("s2", 3), ("s1", 0), ("s2", 1), ("s1", 2)]
    ids = {}
    for i, (g, (key, minute)) in enumerate(zip(graphs, plan)):
        gid = store.persist_graph(_with_prov(g, f"raw {i}", key, minute), created_at=T0 + timedelta(minutes=minute))
        store.add_to_session(key, gid)
        ids[gid] = minute
    assert len(store.list_by_session("s1")) == 3 and len(store.list_by_session("s2")) == 2
    minutes = [ids[g] for g in store.list_by_session("s1")]
    assert minutes == sorted(minutes)
    store.flush_sessions()
    replay = GraphStore(tmp_path)
    assert replay.list_by_session("s1") == store.list_by_session("s1")
    assert sorted(replay.session_keys()) == ["s1", "s2"]


def test_session_listing_falls_back_to_provenance():
    store = GraphStore()
    for i in range(3):
        store.persist_graph(_with_prov(gold_graphs()[i], f"r{i}", "k", i), created_at=T0 + timedelta(minutes=i))
    assert len(store.list_by_session("k")) == 3


def test_corrupt_log_raises(tmp_path):
    (tmp_path / GRAPHS_FILE).write_text("{broken\n", encoding="utf-8")
    with pytest.raises(StorageError):
        GraphStore(tmp_path)


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(StorageError):
        GraphStore(blocker / "sub")


# -- export ---------------------------------------------------------------------------


def test_export_empty_store(tmp_path):
    out = tmp_path / "out.ttl"
    GraphStore().export("turtle", out, SCHEMA)
    assert out.read_text(encoding="utf-8") == ""
    GraphStore().export("jsonl", tmp_path / "out.jsonl")
    assert (tmp_path / "out.jsonl").read_text(encoding="utf-8") == ""


def test_export_single_graph_has_one_event(tmp_path):
    store = GraphStore()
    store.persist_graph(clean_graph())
    out = tmp_path / "one.ttl"
    store.export("turtle", out, SCHEMA)
    text = out.read_text(encoding="utf-8")
    assert text.startswith(f"@prefix olx: <{SCHEMA.namespace_iri}> .")
    assert sum(1 for line in text.splitlines() if line.startswith("<") and " a olx:Event" in line) == 1
    assert "<http://www.w3.org/ns/prov#Entity>" in text
    assert "<http://www.w3.org/ns/prov#Agent>" in text


def test_export_jsonl_sorted_by_id(tmp_path):
    store = GraphStore()
    ids = [store.persist_graph(g) for g in gold_graphs()]
    out = tmp_path / "all.jsonl"
    store.export("jsonl", out)
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == len(ids)
    assert [graph_id(store.fetch_graph(i).graph) for i in sorted(ids)] == sorted(ids)
    assert lines == [graph_to_json(store.fetch_graph(i).graph) for i in sorted(ids)]


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        GraphStore().export("xml", tmp_path / "x")
    with pytest.raises(ValueError):
        GraphStore().export("turtle", tmp_path / "x")


def test_turtle_golden(tmp_path):
    store = GraphStore()
    for g in gold_graphs():
        store.persist_graph(g)
    out = tmp_path / "corpus.ttl"
    store.export("turtle", out, SCHEMA)
    text = out.read_text(encoding="utf-8")
    store.export("turtle", tmp_path / "again.ttl", SCHEMA)
    assert (tmp_path / "again.ttl").read_text(encoding="utf-8") == text
    golden = GOLDEN / "starter_corpus.ttl"
    if REGEN:
        golden.write_text(text, encoding="utf-8")
    assert golden.read_text(encoding="utf-8") == text


def test_turtle_escapes_literals(tmp_path):
    from logkg.kg import make_graph

    g = make_graph([("e", "Event", {"eventMessage": 'say "hi"\nbye\\'})], [])
    store = GraphStore()
    store.persist_graph(g)
    store.export("turtle", tmp_path / "x.ttl", SCHEMA)
    assert r'olx:eventMessage "say \"hi\"\nbye\\"' in (tmp_path / "x.ttl").read_text(encoding="utf-8")
