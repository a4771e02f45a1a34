"""Tokenisation, BM25, score fusion and MMR re-ranking."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

BM25_K1 = 1.2
BM25_B = 0.75
TIE_EPS = 1e-12

_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return [t for t in _SPLIT.split(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class ScoredCandidate:
    entry_id: str
    vector_score: float | None = None
    text_score: float | None = None
    fused_score: float = 0.0


@dataclass(frozen=True)
class MMRParams:
    lam: float = 0.5
    select_count: int = 5
    candidate_pool: int = 20

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.select_count < 1 or self.candidate_pool < 1:
            raise ValueError("select_count and candidate_pool must be positive")
        if self.select_count > self.candidate_pool:
            raise ValueError("select_count must not exceed candidate_pool")


def bm25_scores(
    query_tokens: Sequence[str],
    postings: Mapping[str, Mapping[str, int]],
    doc_lengths: Mapping[str, int],
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> dict[str, float]:
    """BM25 over an inverted index; only documents matching a query term appear.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)); repeated query terms count
    once per occurrence.
    """
    n_docs = len(doc_lengths)
    if n_docs == 0:
        return {}
    avgdl = sum(doc_lengths.values()) / n_docs or 1.0
    scores: dict[str, float] = {}
    for term in query_tokens:
        docs = postings.get(term)
        if not docs:
            continue
        idf = math.log(1.0 + (n_docs - len(docs) + 0.5) / (len(docs) + 0.5))
        for doc_id, tf in docs.items():
            norm = k1 * (1.0 - b + b * doc_lengths[doc_id] / avgdl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / (tf + norm)
    return scores


def _minmax(values: Mapping[str, float]) -> dict[str, float]:
    if not values:
        return {}
    lo, hi = min(values.values()), max(values.values())
    if hi == lo:
        return {k: 1.0 for k in values}
    span = hi - lo
    return {k: (v - lo) / span for k, v in values.items()}


def fuse(
    vector_results: Iterable[ScoredCandidate],
    text_results: Iterable[ScoredCandidate],
) -> list[ScoredCandidate]:
    """Min-max normalise each list, merge by id, average the available scores."""
    vec = {c.entry_id: c.vector_score for c in vector_results if c.vector_score is not None}
    txt = {c.entry_id: c.text_score for c in text_results if c.text_score is not None}
    nv, nt = _minmax(vec), _minmax(txt)
    merged = []
    for eid in set(vec) | set(txt):
        parts = [s[eid] for s in (nv, nt) if eid in s]
        merged.append(
            ScoredCandidate(eid, vec.get(eid), txt.get(eid), min(1.0, max(0.0, sum(parts) / len(parts))))
        )
    merged.sort(key=lambda c: (-c.fused_score, c.entry_id))
    return merged


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def mmr_select(
    query: np.ndarray,
    candidates: Sequence[tuple[str, np.ndarray]],
    lam: float,
    k: int,
) -> list[str]:
    """Greedy MMR over ``candidates`` (id, vector); returns up to ``k`` ids.

    score(d) = lam * cos(d, q) - (1 - lam) * max_{s in selected} cos(d, s);
    the diversity term is 0 while nothing is selected. Scores within
    ``TIE_EPS`` of the best count as ties, which go to the smallest id.
    """
    if not candidates or k <= 0:
        return []
    order = sorted(range(len(candidates)), key=lambda i: candidates[i][0])
    ids = [candidates[i][0] for i in order]
    mat = _unit_rows(np.asarray([candidates[i][1] for i in order], dtype=np.float64))
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    rel = mat @ (q / qn) if qn > 0 else np.zeros(len(ids))
    pair = mat @ mat.T

    selected: list[int] = []
    redundancy = np.full(len(ids), -np.inf)
    remaining = list(range(len(ids)))
    while remaining and len(selected) < k:
        div = redundancy[remaining] if selected else np.zeros(len(remaining))
        scores = lam * rel[remaining] - (1.0 - lam) * div
        top = scores.max()
        # remaining is in id order, so the first near-maximal entry has the smallest id
        best = remaining[int(np.flatnonzero(scores >= top - TIE_EPS)[0])]
        selected.append(best)
        remaining.remove(best)
        redundancy = np.maximum(redundancy, pair[best])
    return [ids[i] for i in selected]


def rerank_candidates(
    query: np.ndarray,
    pool: Sequence[ScoredCandidate],
    embeddings: Mapping[str, np.ndarray],
    params: MMRParams,
) -> list[str]:
    """Truncate ``pool`` to ``candidate_pool`` then MMR-select ``select_count`` ids."""
    head = list(pool)[: params.candidate_pool]
    return mmr_select(query, [(c.entry_id, embeddings[c.entry_id]) for c in head], params.lam, params.select_count)


def term_counts(text: str) -> Counter[str]:
    return Counter(tokenize(text))
