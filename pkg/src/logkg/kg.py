"""Knowledge-graph data model, strict payload parsing, canonical form and triples."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping, Union

from .errors import SyntacticError

Scalar = Union[str, int, float, bool]
PropertyValue = Union[Scalar, tuple]


@dataclass(frozen=True)
class KGNode:
    id: str
    node_type: str
    properties: Mapping[str, PropertyValue] = field(default_factory=dict)

    def values(self, name: str) -> tuple:
        v = self.properties[name]
        return tuple(v) if isinstance(v, (list, tuple)) else (v,)


@dataclass(frozen=True)
class KGRelationship:
    source_id: str
    target_id: str
    rel_type: str


@dataclass(frozen=True)
class Provenance:
    raw_log: str
    context: str | None = None
    session_key: str | None = None
    generated_at: datetime | None = None
    model_id: str = ""
    attempt_count: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "raw_log": self.raw_log,
            "context": self.context,
            "session_key": self.session_key,
            "generated_at": self.generated_at.isoformat() if self.generated_at else None,
            "model_id": self.model_id,
            "attempt_count": self.attempt_count,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> Provenance:
        ts = doc.get("generated_at")
        return cls(
            raw_log=doc.get("raw_log", ""),
            context=doc.get("context"),
            session_key=doc.get("session_key"),
            generated_at=parse_datetime(ts) if ts else None,
            model_id=doc.get("model_id", ""),
            attempt_count=int(doc.get("attempt_count", 0)),
        )


@dataclass(frozen=True)
class KnowledgeGraph:
    nodes: tuple[KGNode, ...] = ()
    relationships: tuple[KGRelationship, ...] = ()
    provenance: Provenance | None = None

    @property
    def is_empty(self) -> bool:
        return not self.nodes and not self.relationships

    def node_map(self) -> dict[str, KGNode]:
        return {n.id: n for n in self.nodes}

    def with_provenance(self, provenance: Provenance | None) -> KnowledgeGraph:
        return replace(self, provenance=provenance)


# ---------------------------------------------------------------------------
# literal normalisation
# ---------------------------------------------------------------------------

_DATE_PREFIX = re.compile(r"^\d{4}-\d{2}-\d{2}")
_EXTRA_FORMATS = ("%Y-%m-%d %H:%M:%S,%f", "%d/%b/%Y:%H:%M:%S %z")


def parse_datetime(text: str) -> datetime | None:
    """Parse the timestamp shapes commonly seen in logs; ``None`` if not a timestamp."""
    s = text.strip()
    if not s:
        return None
    if _DATE_PREFIX.match(s):
        iso = s[:-1] + "+00:00" if s.endswith(("Z", "z")) else s
        try:
            return datetime.fromisoformat(iso)
        except ValueError:
            pass
    for fmt in _EXTRA_FORMATS:
        try:
            return datetime.strptime(s, fmt)
        except ValueError:
            continue
    return None


def canonical_datetime(dt: datetime) -> str:
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc)
    return dt.isoformat()


@dataclass(frozen=True, order=True)
class Literal:
    kind: str  # boolean | number | datetime | string
    value: str


def normalize_literal(value: Scalar) -> Literal:
    """Type-aware normal form used for triple identity."""
    if isinstance(value, bool):
        return Literal("boolean", "true" if value else "false")
    if isinstance(value, int):
        return Literal("number", str(value))
    if isinstance(value, float):
        if value.is_integer():
            return Literal("number", str(int(value)))
        return Literal("number", repr(value))
    s = str(value).strip()
    dt = parse_datetime(s)
    if dt is not None:
        return Literal("datetime", canonical_datetime(dt))
    return Literal("string", s)


@dataclass(frozen=True, order=True)
class EntityKey:
    """Id-independent identity of a node: its type plus property multiset."""

    node_type: str
    properties: tuple[tuple[str, Literal], ...]


def entity_key(node: KGNode) -> EntityKey:
    items = [(name, normalize_literal(v)) for name in node.properties for v in node.values(name)]
    return EntityKey(node.node_type, tuple(sorted(items)))


@dataclass(frozen=True)
class Triple:
    subject: EntityKey
    predicate: str
    object: EntityKey | Literal


def to_triples(g: KnowledgeGraph) -> set[Triple]:
    """One triple per property value and one per relationship.

    Relationships with an undefined endpoint yield no triple. Nodes with equal
    canonical keys collapse into one entity.
    """
    keys = {n.id: entity_key(n) for n in g.nodes}
    out: set[Triple] = set()
    for n in g.nodes:
        k = keys[n.id]
        for name in n.properties:
            for v in n.values(name):
                out.add(Triple(k, name, normalize_literal(v)))
    for r in g.relationships:
        if r.source_id in keys and r.target_id in keys:
            out.add(Triple(keys[r.source_id], r.rel_type, keys[r.target_id]))
    return out


def canonicalize(g: KnowledgeGraph) -> KnowledgeGraph:
    """Stable ordering: nodes by (type, canonical key, id), relationships lexicographically."""
    nodes = []
    for n in g.nodes:
        props = {}
        for name in sorted(n.properties):
            v = n.properties[name]
            if isinstance(v, (list, tuple)):
                v = tuple(sorted(v, key=normalize_literal))
            props[name] = v
        nodes.append(KGNode(n.id, n.node_type, props))
    nodes.sort(key=lambda n: (n.node_type, entity_key(n), n.id))
    rels = sorted(g.relationships, key=lambda r: (r.source_id, r.rel_type, r.target_id))
    return KnowledgeGraph(tuple(nodes), tuple(rels), g.provenance)


# ---------------------------------------------------------------------------
# wire format
# ---------------------------------------------------------------------------


def _value_to_json(v: PropertyValue) -> Any:
    return list(v) if isinstance(v, tuple) else v


def graph_to_dict(g: KnowledgeGraph, *, provenance: bool = True) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "nodes": [
            {"id": n.id, "type": n.node_type, "properties": {k: _value_to_json(v) for k, v in n.properties.items()}}
            for n in g.nodes
        ],
        "relationships": [{"source": r.source_id, "target": r.target_id, "type": r.rel_type} for r in g.relationships],
    }
    if provenance and g.provenance is not None:
        doc["provenance"] = g.provenance.to_dict()
    return doc


def graph_to_json(g: KnowledgeGraph, *, provenance: bool = True) -> str:
    """Canonical JSON text: sorted keys, compact separators, UTF-8."""
    return json.dumps(graph_to_dict(g, provenance=provenance), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _is_scalar(v: Any) -> bool:
    if isinstance(v, float):
        return math.isfinite(v)
    return isinstance(v, (str, int, bool))


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-finite number {name}")


def _strip_fences(text: str) -> str:
    s = text.strip()
    if s.startswith("```"):
        first_nl = s.find("\n")
        s = s[first_nl + 1 :] if first_nl != -1 else s[3:]
        if s.rstrip().endswith("```"):
            s = s.rstrip()[:-3]
    return s.strip()


def _parse_doc(doc: Any, *, allow_provenance: bool) -> KnowledgeGraph:
    if not isinstance(doc, dict):
        raise SyntacticError("top-level value must be a JSON object with 'nodes' and 'relationships'")
    allowed = {"nodes", "relationships"} | ({"provenance"} if allow_provenance else set())
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SyntacticError(f"unknown top-level keys: {', '.join(unknown)}")
    for key in ("nodes", "relationships"):
        if key not in doc:
            raise SyntacticError(f"missing '{key}' array")
        if not isinstance(doc[key], list):
            raise SyntacticError(f"'{key}' must be an array")

    nodes: list[KGNode] = []
    seen: set[str] = set()
    for i, raw in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(raw, dict):
            raise SyntacticError(f"{where} must be an object")
        extra = sorted(set(raw) - {"id", "type", "properties"})
        if extra:
            raise SyntacticError(f"{where} has unknown keys: {', '.join(extra)}")
        nid, ntype = raw.get("id"), raw.get("type")
        if not isinstance(nid, str) or not nid:
            raise SyntacticError(f"{where} needs a non-empty string 'id'")
        if not isinstance(ntype, str) or not ntype:
            raise SyntacticError(f"{where} needs a non-empty string 'type'")
        if nid in seen:
            raise SyntacticError(f"duplicate node id '{nid}'")
        seen.add(nid)
        props = raw.get("properties", {})
        if not isinstance(props, dict):
            raise SyntacticError(f"{where}.properties must be an object")
        clean: dict[str, PropertyValue] = {}
        for name, value in props.items():
            if isinstance(value, list):
                if not value or not all(_is_scalar(v) for v in value):
                    raise SyntacticError(f"{where}.properties.{name} must be a scalar or a non-empty list of scalars")
                clean[name] = tuple(value)
            elif _is_scalar(value):
                clean[name] = value
            else:
                raise SyntacticError(f"{where}.properties.{name} must be a scalar or a non-empty list of scalars")
        nodes.append(KGNode(nid, ntype, clean))

    rels: list[KGRelationship] = []
    for i, raw in enumerate(doc["relationships"]):
        where = f"relationships[{i}]"
        if not isinstance(raw, dict):
            raise SyntacticError(f"{where} must be an object")
        if set(raw) != {"source", "target", "type"}:
            raise SyntacticError(f"{where} must have exactly the keys 'source', 'target', 'type'")
        if not all(isinstance(raw[k], str) and raw[k] for k in ("source", "target", "type")):
            raise SyntacticError(f"{where} fields must be non-empty strings")
        rels.append(KGRelationship(raw["source"], raw["target"], raw["type"]))

    prov = None
    if allow_provenance and doc.get("provenance") is not None:
        if not isinstance(doc["provenance"], dict):
            raise SyntacticError("'provenance' must be an object")
        prov = Provenance.from_dict(doc["provenance"])
    return KnowledgeGraph(tuple(nodes), tuple(rels), prov)


def parse_structured_output(raw: str) -> KnowledgeGraph:
    """Strictly parse a model payload; raises :class:`SyntacticError`."""
    if not isinstance(raw, str):
        raise SyntacticError("output must be a JSON string")
    text = _strip_fences(raw)
    if not text:
        raise SyntacticError("output is empty")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SyntacticError(f"malformed JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from None
    except ValueError as exc:
        raise SyntacticError(f"malformed JSON ({exc})") from None
    return _parse_doc(doc, allow_provenance=False)


def graph_from_dict(doc: Mapping[str, Any]) -> KnowledgeGraph:
    """Parse the storage format (payload plus optional provenance)."""
    return _parse_doc(dict(doc), allow_provenance=True)


def graph_from_json(text: str) -> KnowledgeGraph:
    return graph_from_dict(json.loads(text))


def make_graph(
    nodes: Iterable[tuple[str, str, Mapping[str, Any]]],
    relationships: Iterable[tuple[str, str, str]] = (),
    provenance: Provenance | None = None,
) -> KnowledgeGraph:
    """Convenience constructor: ``nodes`` as (id, type, props), rels as (source, type, target)."""
    ns = tuple(
        KGNode(i, t, {k: tuple(v) if isinstance(v, list) else v for k, v in p.items()}) for i, t, p in nodes
    )
    rs = tuple(KGRelationship(s, o, r) for s, r, o in relationships)
    return KnowledgeGraph(ns, rs, provenance)


EMPTY_GRAPH = KnowledgeGraph()
