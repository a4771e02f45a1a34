"""Syntactic, shape and semantic validation of generated graphs.

Violations are plain data. Messages are deterministic templates because they
are pasted verbatim into correction prompts.

Constraint counting (the violation-ratio denominator): every node contributes
one type check, one abstract check, one known-property check per property,
one datatype check per known property, one cardinality check per known
property with a ``max_cardinality``, one presence check per required property
and one cardinality check per applicable relationship definition. Every
relationship contributes one known-type check and, when both endpoints exist
with known types, one endpoint check.
"""

from __future__ import annotations

from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import EmptyInput, SyntacticError
from .kg import KGNode, KnowledgeGraph, entity_key, parse_datetime, parse_structured_output
from .ontology import OntologySchema, RelationshipDef, is_subclass_of


class Stage(str, Enum):
    SYNTACTIC = "syntactic"
    SHAPE = "shape"
    SEMANTIC = "semantic"


STAGE_ORDER = {Stage.SYNTACTIC: 0, Stage.SHAPE: 1, Stage.SEMANTIC: 2}

CODES = (
    "syntactic/malformed",
    "shape/unknown-type",
    "shape/abstract-type",
    "shape/unknown-property",
    "shape/datatype",
    "shape/missing-required",
    "shape/cardinality",
    "shape/unknown-relationship",
    "shape/endpoint-type",
    "semantic/no-event",
    "semantic/multiple-events",
    "semantic/dangling-endpoint",
    "semantic/duplicate-node",
    "semantic/disconnected",
)

EVENT_CLASS = "Event"


@dataclass(frozen=True)
class Violation:
    stage: Stage
    code: str
    location: str  # "node:<id>", "relationship:<index>" or "graph"
    message: str

    def __post_init__(self) -> None:
        if self.code not in CODES:
            raise ValueError(f"unknown violation code {self.code!r}")

    def sort_key(self) -> tuple:
        return (STAGE_ORDER[self.stage], self.code, self.location, self.message)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    checked_constraints: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def count(self, stage: Stage) -> int:
        return sum(1 for v in self.violations if v.stage == stage)

    def sorted(self) -> list[Violation]:
        return sorted(self.violations, key=Violation.sort_key)

    def __add__(self, other: ValidationReport) -> ValidationReport:
        return ValidationReport(self.violations + other.violations, self.checked_constraints + other.checked_constraints)

    def to_dict(self) -> dict:
        return {
            "checked_constraints": self.checked_constraints,
            "violations": [
                {"stage": v.stage.value, "code": v.code, "location": v.location, "message": v.message}
                for v in self.sorted()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ValidationReport:
        vs = tuple(Violation(Stage(v["stage"]), v["code"], v["location"], v["message"]) for v in doc["violations"])
        return cls(vs, int(doc["checked_constraints"]))


def _node_loc(node_id: str) -> str:
    return f"node:{node_id}"


def _rel_loc(i: int) -> str:
    return f"relationship:{i}"


def _datatype_ok(value: object, datatype: str) -> bool:
    if datatype == "string":
        return isinstance(value, str)
    if datatype == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if datatype == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if datatype == "boolean":
        return isinstance(value, bool)
    if datatype == "datetime":
        return isinstance(value, str) and parse_datetime(value) is not None
    return False


def _matching_def(schema: OntologySchema, rel_type: str, src: str, dst: str) -> RelationshipDef | None:
    for d in schema.relationships_named(rel_type):
        if is_subclass_of(schema, src, d.source_class) and is_subclass_of(schema, dst, d.target_class):
            return d
    return None


def check_shapes(g: KnowledgeGraph, s: OntologySchema) -> ValidationReport:
    out: list[Violation] = []
    checks = 0

    def add(code: str, loc: str, msg: str) -> None:
        out.append(Violation(Stage.SHAPE, code, loc, msg))

    known_nodes: dict[str, KGNode] = {}
    for n in g.nodes:
        loc = _node_loc(n.id)
        checks += 1
        if n.node_type not in s.classes:
            add("shape/unknown-type", loc, f"Node '{n.id}' has type '{n.node_type}', which is not defined in the ontology.")
            continue
        known_nodes[n.id] = n
        cls = s.classes[n.node_type]
        checks += 1
        if cls.abstract:
            add(
                "shape/abstract-type",
                loc,
                f"Node '{n.id}' uses the abstract type '{n.node_type}'; use one of its concrete subclasses.",
            )
        props = s.properties_of(n.node_type)
        for name in sorted(n.properties):
            checks += 1
            pdef = props.get(name)
            if pdef is None:
                add(
                    "shape/unknown-property",
                    loc,
                    f"Node '{n.id}' of type '{n.node_type}' has property '{name}', which is not allowed for this type.",
                )
                continue
            values = n.values(name)
            checks += 1
            bad = [v for v in values if not _datatype_ok(v, pdef.datatype)]
            if bad:
                add(
                    "shape/datatype",
                    loc,
                    f"Property '{name}' of node '{n.id}' must be of type {pdef.datatype}, got {bad[0]!r}.",
                )
            if pdef.max_cardinality is not None:
                checks += 1
                if len(values) > pdef.max_cardinality:
                    add(
                        "shape/cardinality",
                        loc,
                        f"Property '{name}' of node '{n.id}' has {len(values)} values; at most {pdef.max_cardinality} allowed.",
                    )
        for name in sorted(props):
            if props[name].required:
                checks += 1
                if name not in n.properties:
                    add(
                        "shape/missing-required",
                        loc,
                        f"Node '{n.id}' of type '{n.node_type}' is missing the required property '{name}'.",
                    )

    # edges assigned to the first matching definition, for cardinality counting
    edge_counts: Counter[tuple[str, RelationshipDef]] = Counter()
    for i, r in enumerate(g.relationships):
        loc = _rel_loc(i)
        checks += 1
        if r.rel_type not in s.relationship_names:
            add("shape/unknown-relationship", loc, f"Relationship type '{r.rel_type}' is not defined in the ontology.")
            continue
        src, dst = known_nodes.get(r.source_id), known_nodes.get(r.target_id)
        if src is None or dst is None:
            continue
        checks += 1
        d = _matching_def(s, r.rel_type, src.node_type, dst.node_type)
        if d is None:
            allowed = ", ".join(f"({x.source_class}, {x.name}, {x.target_class})" for x in s.relationships_named(r.rel_type))
            add(
                "shape/endpoint-type",
                loc,
                f"Relationship '{r.rel_type}' from '{r.source_id}' ({src.node_type}) to '{r.target_id}' "
                f"({dst.node_type}) does not match the allowed definitions: {allowed}.",
            )
            continue
        edge_counts[(src.id, d)] += 1

    rels_sorted = sorted(s.relationships, key=lambda d: (d.name, d.source_class, d.target_class))
    for n in known_nodes.values():
        for d in rels_sorted:
            if d.min_cardinality == 0 and d.max_cardinality is None:
                continue
            if not is_subclass_of(s, n.node_type, d.source_class):
                continue
            checks += 1
            c = edge_counts[(n.id, d)]
            if c < d.min_cardinality or (d.max_cardinality is not None and c > d.max_cardinality):
                bounds = f"{d.min_cardinality}..{d.max_cardinality if d.max_cardinality is not None else '*'}"
                add(
                    "shape/cardinality",
                    _node_loc(n.id),
                    f"Node '{n.id}' has {c} '{d.name}' relationships to {d.target_class}; expected {bounds}.",
                )

    return ValidationReport(tuple(out), checks)


def check_semantic(g: KnowledgeGraph) -> ValidationReport:
    out: list[Violation] = []

    def add(code: str, loc: str, msg: str) -> None:
        out.append(Violation(Stage.SEMANTIC, code, loc, msg))

    events = [n for n in g.nodes if n.node_type == EVENT_CLASS]
    if not events:
        add("semantic/no-event", "graph", "The graph contains no 'Event' node; exactly one is required.")
    elif len(events) > 1:
        ids = ", ".join(f"'{n.id}'" for n in events)
        add(
            "semantic/multiple-events",
            "graph",
            f"The graph contains {len(events)} 'Event' nodes ({ids}); exactly one is required.",
        )

    ids = {n.id for n in g.nodes}
    for i, r in enumerate(g.relationships):
        missing = [x for x in (r.source_id, r.target_id) if x not in ids]
        if missing:
            names = ", ".join(f"'{x}'" for x in missing)
            add(
                "semantic/dangling-endpoint",
                _rel_loc(i),
                f"Relationship '{r.rel_type}' from '{r.source_id}' to '{r.target_id}' references undefined node(s) {names}.",
            )

    first_by_key: dict = {}
    for n in g.nodes:
        k = entity_key(n)
        if k in first_by_key:
            add(
                "semantic/duplicate-node",
                _node_loc(n.id),
                f"Node '{n.id}' duplicates node '{first_by_key[k]}' (same type and properties); merge them.",
            )
        else:
            first_by_key[k] = n.id

    if events:
        adj: dict[str, set[str]] = defaultdict(set)
        for r in g.relationships:
            if r.source_id in ids and r.target_id in ids:
                adj[r.source_id].add(r.target_id)
                adj[r.target_id].add(r.source_id)
        seen = {n.id for n in events}
        queue = deque(seen)
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        for n in g.nodes:
            if n.id not in seen:
                add(
                    "semantic/disconnected",
                    _node_loc(n.id),
                    f"Node '{n.id}' is not reachable from the 'Event' node; connect it or remove it.",
                )

    return ValidationReport(tuple(out), 0)


def syntactic_report(err: SyntacticError) -> ValidationReport:
    return ValidationReport(
        (Violation(Stage.SYNTACTIC, "syntactic/malformed", "graph", f"The output is not a valid graph: {err.reason}."),),
        0,
    )


def validate_graph(g: KnowledgeGraph, s: OntologySchema) -> ValidationReport:
    """Shape and semantic checks combined."""
    return check_shapes(g, s) + check_semantic(g)


def validate_output(raw: str, s: OntologySchema) -> tuple[KnowledgeGraph | None, ValidationReport]:
    """All three stages over a raw model payload."""
    try:
        g = parse_structured_output(raw)
    except SyntacticError as err:
        return None, syntactic_report(err)
    return g, validate_graph(g, s)


def violation_ratio(reports: Iterable[ValidationReport]) -> float:
    """Shape violations over checked shape constraints, pooled over all reports."""
    reports = list(reports)
    checked = sum(r.checked_constraints for r in reports)
    if checked == 0:
        raise EmptyInput("no report with checked constraints")
    violated = sum(r.count(Stage.SHAPE) for r in reports)
    return violated / checked
