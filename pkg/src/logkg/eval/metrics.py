"""Graph-quality and tactics metrics.

Conventions: a ratio whose denominator is empty is 1.0 when the other side
is empty too and 0.0 otherwise. Entity matches are strict (type plus full
property map). Per-event values are macro-averaged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from ..errors import AlignmentError, EmptyInput
from ..events import LogEvent
from ..kg import EntityKey, KnowledgeGraph, entity_key, graph_from_dict, to_triples
from ..validation import ValidationReport, violation_ratio


def _ratio(num: int, den: int, other_empty: bool) -> float:
    if den == 0:
        return 1.0 if other_empty else 0.0
    return num / den


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def set_prf(pred: set, gold: set) -> tuple[float, float, float]:
    tp = len(pred & gold)
    p = _ratio(tp, len(pred), not gold)
    r = _ratio(tp, len(gold), not pred)
    return p, r, _f1(p, r)


def triple_prf(generated: KnowledgeGraph, gold: KnowledgeGraph) -> tuple[float, float, float]:
    return set_prf(to_triples(generated), to_triples(gold))


def entity_keys(g: KnowledgeGraph) -> set[EntityKey]:
    return {entity_key(n) for n in g.nodes}


def edge_keys(g: KnowledgeGraph) -> set[tuple[EntityKey, str, EntityKey]]:
    nodes = g.node_map()
    return {
        (entity_key(nodes[r.source_id]), r.rel_type, entity_key(nodes[r.target_id]))
        for r in g.relationships
        if r.source_id in nodes and r.target_id in nodes
    }


def entity_linking_accuracy(generated: KnowledgeGraph, gold: KnowledgeGraph) -> float:
    """Share of gold entities reproduced exactly by the generated graph."""
    gen, ref = entity_keys(generated), entity_keys(gold)
    return _ratio(len(gen & ref), len(ref), not gen)


def relationship_linking_accuracy(generated: KnowledgeGraph, gold: KnowledgeGraph) -> float:
    """Share of gold edges reproduced between correctly generated entities."""
    correct = entity_keys(generated) & entity_keys(gold)
    gen = {e for e in edge_keys(generated) if e[0] in correct and e[2] in correct}
    ref = edge_keys(gold)
    return _ratio(len(gen & ref), len(ref), not edge_keys(generated))


@dataclass(frozen=True)
class GoldPair:
    event: LogEvent
    gold_graph: KnowledgeGraph
    gold_tactics: frozenset[str] | None = None


def read_gold(path: str | Path) -> list[GoldPair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            tactics = doc.get("gold_tactics")
            out.append(
                GoldPair(
                    LogEvent.from_dict(doc["event"]),
                    graph_from_dict(doc["gold_graph"]),
                    frozenset(tactics) if tactics is not None else None,
                )
            )
    return out


METRIC_NAMES = (
    "generation_success_ratio",
    "shacl_violation_ratio",
    "precision",
    "recall",
    "f1",
    "entity_linking_accuracy",
    "relationship_linking_accuracy",
)


@dataclass
class MetricsReport:
    generation_success_ratio: float
    shacl_violation_ratio: float
    precision: float
    recall: float
    f1: float
    entity_linking_accuracy: float
    relationship_linking_accuracy: float
    per_item: list[dict[str, Any]] = field(default_factory=list)
    footnotes: list[str] = field(default_factory=list)

    def totals(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}

    def to_dict(self) -> dict[str, Any]:
        return {**self.totals(), "per_item": self.per_item, "footnotes": self.footnotes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        width = max(len(k) for k in METRIC_NAMES)
        rows = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  ------"]
        rows += [f"{k.ljust(width)}  {v:.4f}" for k, v in self.totals().items()]
        rows += [f"* {f}" for f in self.footnotes]
        return "\n".join(rows)

    def to_csv_rows(self) -> list[list[str]]:
        header = ["raw", "non_empty", "precision", "recall", "f1", "entity_linking_accuracy", "relationship_linking_accuracy"]
        rows = [header]
        for item in self.per_item:
            rows.append([str(item[h]) for h in header])
        rows.append(["TOTAL", str(self.generation_success_ratio)] + [str(getattr(self, h)) for h in header[2:]])
        return rows


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def run_metrics(
    run: Sequence[tuple[LogEvent, KnowledgeGraph]],
    golds: Sequence[GoldPair],
    reports: Iterable[ValidationReport] = (),
) -> MetricsReport:
    """Aggregate metrics over aligned (event, generated graph) / gold pairs."""
    if len(run) != len(golds):
        raise AlignmentError(f"{len(run)} generated graphs but {len(golds)} gold pairs")
    if not run:
        raise EmptyInput("no pairs to evaluate")
    items = []
    for (event, generated), gold in zip(run, golds):
        if event.raw != gold.event.raw:
            raise AlignmentError(f"event mismatch: {event.raw[:40]!r} vs {gold.event.raw[:40]!r}")
        p, r, f = triple_prf(generated, gold.gold_graph)
        items.append(
            {
                "raw": event.raw,
                "non_empty": not generated.is_empty,
                "precision": p,
                "recall": r,
                "f1": f,
                "entity_linking_accuracy": entity_linking_accuracy(generated, gold.gold_graph),
                "relationship_linking_accuracy": relationship_linking_accuracy(generated, gold.gold_graph),
            }
        )
    footnotes = ["f1 is the mean of per-event F1 (macro); it need not equal the harmonic mean of the averaged precision and recall"]
    reports = list(reports)
    try:
        vr = violation_ratio(reports)
    except EmptyInput:
        vr = 0.0
        footnotes.append("no shape constraints were checked; violation ratio reported as 0")
    if any(gold.gold_graph.is_empty for gold in golds):
        footnotes.append("pairs with an empty gold graph score 1.0 when the generated graph is empty too")
    return MetricsReport(
        generation_success_ratio=sum(1 for i in items if i["non_empty"]) / len(items),
        shacl_violation_ratio=vr,
        precision=_mean([i["precision"] for i in items]),
        recall=_mean([i["recall"] for i in items]),
        f1=_mean([i["f1"] for i in items]),
        entity_linking_accuracy=_mean([i["entity_linking_accuracy"] for i in items]),
        relationship_linking_accuracy=_mean([i["relationship_linking_accuracy"] for i in items]),
        per_item=items,
        footnotes=footnotes,
    )


# ---------------------------------------------------------------------------
# tactics
# ---------------------------------------------------------------------------


def tactics_prf(pred: Iterable[str], gold: Iterable[str]) -> tuple[float, float, float]:
    return set_prf(set(pred), set(gold))


@dataclass(frozen=True)
class TacticScore:
    tactic: str
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp, self.tp + self.fn == 0)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn, self.tp + self.fp == 0)

    @property
    def f1(self) -> float:
        return _f1(self.precision, self.recall)


def tactics_report(
    preds: Mapping[str, Iterable[str]], golds: Mapping[str, Iterable[str]]
) -> dict[str, Any]:
    """Per-tactic counts over sessions plus the session-level macro average.

    Every tactic appearing in a prediction or a gold set gets its own
    precision/recall/F1.
    """
    if set(preds) != set(golds):
        raise AlignmentError("predictions and gold labels cover different sessions")
    per_session = {k: tactics_prf(preds[k], golds[k]) for k in sorted(golds)}
    tactics = sorted({t for v in preds.values() for t in v} | {t for v in golds.values() for t in v})
    scores = []
    for t in tactics:
        tp = sum(1 for k in golds if t in set(preds[k]) and t in set(golds[k]))
        fp = sum(1 for k in golds if t in set(preds[k]) and t not in set(golds[k]))
        fn = sum(1 for k in golds if t not in set(preds[k]) and t in set(golds[k]))
        scores.append(TacticScore(t, tp, fp, fn))
    n = len(per_session)
    return {
        "per_tactic": {s.tactic: {"tp": s.tp, "fp": s.fp, "fn": s.fn, "precision": s.precision, "recall": s.recall, "f1": s.f1} for s in scores},
        "per_session": {k: {"precision": p, "recall": r, "f1": f} for k, (p, r, f) in per_session.items()},
        "macro": {
            "precision": sum(v[0] for v in per_session.values()) / n if n else 0.0,
            "recall": sum(v[1] for v in per_session.values()) / n if n else 0.0,
            "f1": sum(v[2] for v in per_session.values()) / n if n else 0.0,
        },
    }
