"""Manually crafted starter exemplars used to bootstrap the retrieval index."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .kg import KnowledgeGraph, graph_from_dict, graph_to_dict
from .retrieval.embedding import Embedder
from .retrieval.index import ExemplarEntry, ExemplarIndex


@dataclass(frozen=True)
class Starter:
    id: str
    log: str
    context: str | None
    graph: KnowledgeGraph


def load_starters(path: str | Path | None = None) -> list[Starter]:
    if path is None:
        text = resources.files("logkg.data").joinpath("starter_exemplars.jsonl").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = []
    for line in text.splitlines():
        if line.strip():
            doc = json.loads(line)
            out.append(Starter(doc["id"], doc["log"], doc.get("context"), graph_from_dict(doc["graph"])))
    return out


def bootstrap_index(index: ExemplarIndex, embedder: Embedder, starters: list[Starter]) -> int:
    """Add starters not yet in ``index``; returns how many were added."""
    added = 0
    for s in starters:
        if s.id in index:
            continue
        vec = embedder.embed(ExemplarEntry.query_text(s.log, s.context))
        index.add(ExemplarEntry.build(s.id, s.log, s.context, s.id, vec, graph_to_dict(s.graph, provenance=False)))
        added += 1
    return added
