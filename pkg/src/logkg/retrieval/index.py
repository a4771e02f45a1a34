"""Exemplar index: exhaustive cosine search plus a BM25 inverted index.

On disk the index is two files in one directory:

* ``embeddings.bin``: magic ``LKGE``, little-endian uint32 header length,
  a JSON header ``{"dimension", "count", "ids"}``, then ``count`` rows of
  little-endian float32.
* ``postings.json``: entry metadata, token postings and document lengths.
"""

from __future__ import annotations

import json
import os
import struct
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from ..errors import DimensionMismatch, EmptyIndex, StorageError
from .ranking import MMRParams, ScoredCandidate, bm25_scores, fuse, rerank_candidates, tokenize

EMBEDDINGS_FILE = "embeddings.bin"
POSTINGS_FILE = "postings.json"
_MAGIC = b"LKGE"


@dataclass(frozen=True)
class ExemplarEntry:
    id: str
    log_text: str
    context_text: str | None
    graph_ref: str
    embedding: np.ndarray = field(repr=False, compare=False)
    tokens: Counter = field(repr=False, compare=False, default_factory=Counter)
    graph: Mapping[str, Any] | None = field(repr=False, compare=False, default=None)

    @staticmethod
    def query_text(log_text: str, context_text: str | None) -> str:
        return log_text if not context_text else f"{log_text}\n{context_text}"

    @classmethod
    def build(
        cls,
        id: str,
        log_text: str,
        context_text: str | None,
        graph_ref: str,
        embedding: np.ndarray,
        graph: Mapping[str, Any] | None = None,
    ) -> ExemplarEntry:
        tokens = Counter(tokenize(cls.query_text(log_text, context_text)))
        return cls(id, log_text, context_text, graph_ref, np.asarray(embedding, dtype=np.float32), tokens, graph)


class ExemplarIndex:
    def __init__(self, dimension: int | None = None) -> None:
        self.dimension = dimension
        self._entries: dict[str, ExemplarEntry] = {}
        self._ids: list[str] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._postings: dict[str, dict[str, int]] = {}
        self._lengths: dict[str, int] = {}
        self._lock = threading.RLock()
        self.reads = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    def get(self, entry_id: str) -> ExemplarEntry:
        return self._entries[entry_id]

    def entries(self) -> list[ExemplarEntry]:
        return [self._entries[i] for i in self._ids]

    def add(self, e: ExemplarEntry) -> None:
        vec = np.asarray(e.embedding, dtype=np.float32).reshape(-1)
        with self._lock:
            if self.dimension is None:
                self.dimension = int(vec.shape[0])
            if vec.shape[0] != self.dimension:
                raise DimensionMismatch(f"embedding has dimension {vec.shape[0]}, index expects {self.dimension}")
            if e.id in self._entries:
                return
            self._entries[e.id] = e
            self._ids.append(e.id)
            self._rows.append(vec)
            self._matrix = None
            for term, tf in e.tokens.items():
                self._postings.setdefault(term, {})[e.id] = tf
            self._lengths[e.id] = sum(e.tokens.values())

    def _snapshot(self) -> tuple[list[str], np.ndarray]:
        with self._lock:
            if self._matrix is None or self._matrix.shape[0] != len(self._rows):
                self._matrix = np.vstack(self._rows) if self._rows else np.zeros((0, self.dimension or 0), np.float32)
            return list(self._ids), self._matrix

    # -- search -----------------------------------------------------------

    def vector_search(self, q: np.ndarray, k: int) -> list[ScoredCandidate]:
        """Exact top-k by cosine similarity; ties by entry id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        ids, mat = self._snapshot()
        if not ids:
            raise EmptyIndex("index is empty")
        self.reads += 1
        m = mat.astype(np.float64)
        norms = np.linalg.norm(m, axis=1)
        norms[norms == 0] = 1.0
        qv = np.asarray(q, dtype=np.float64).reshape(-1)
        qn = np.linalg.norm(qv)
        sims = (m @ qv) / (norms * (qn if qn > 0 else 1.0))
        ranked = sorted(zip(ids, sims.tolist()), key=lambda x: (-x[1], x[0]))[:k]
        return [ScoredCandidate(eid, vector_score=s) for eid, s in ranked]

    def fulltext_search(self, q: str, k: int) -> list[ScoredCandidate]:
        """Top-k by BM25; documents sharing no token with the query are omitted."""
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:
            if not self._entries:
                raise EmptyIndex("index is empty")
            self.reads += 1
            scores = bm25_scores(tokenize(q), self._postings, self._lengths)
        ranked = sorted(scores.items(), key=lambda x: (-x[1], x[0]))[:k]
        return [ScoredCandidate(eid, text_score=s) for eid, s in ranked]

    def hybrid_search(self, q_vec: np.ndarray, q_text: str, pool: int) -> list[ScoredCandidate]:
        return fuse(self.vector_search(q_vec, pool), self.fulltext_search(q_text, pool))

    def mmr_rerank(self, q: np.ndarray, pool: list[ScoredCandidate], p: MMRParams) -> list[ExemplarEntry]:
        with self._lock:
            embeddings = {c.entry_id: self._entries[c.entry_id].embedding for c in pool[: p.candidate_pool]}
        return [self._entries[i] for i in rerank_candidates(q, pool, embeddings, p)]

    def select_exemplars(self, q_vec: np.ndarray, q_text: str, p: MMRParams) -> list[ExemplarEntry]:
        """Hybrid retrieval followed by MMR; empty list on an empty index."""
        if not self._entries:
            return []
        return self.mmr_rerank(q_vec, self.hybrid_search(q_vec, q_text, p.candidate_pool), p)

    # -- persistence ------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        ids, mat = self._snapshot()
        header = json.dumps(
            {"dimension": self.dimension or 0, "count": len(ids), "ids": ids}, separators=(",", ":")
        ).encode("utf-8")
        body = np.ascontiguousarray(mat, dtype="<f4").tobytes()
        meta = {
            "entries": {
                eid: {
                    "log_text": self._entries[eid].log_text,
                    "context_text": self._entries[eid].context_text,
                    "graph_ref": self._entries[eid].graph_ref,
                    "graph": self._entries[eid].graph,
                }
                for eid in ids
            },
            "postings": {t: dict(sorted(p.items())) for t, p in sorted(self._postings.items())},
            "doc_lengths": dict(sorted(self._lengths.items())),
        }
        try:
            d.mkdir(parents=True, exist_ok=True)
            _atomic_write(d / EMBEDDINGS_FILE, _MAGIC + struct.pack("<I", len(header)) + header + body)
            _atomic_write(
                d / POSTINGS_FILE,
                (json.dumps(meta, sort_keys=True, ensure_ascii=False, indent=1) + "\n").encode("utf-8"),
            )
        except OSError as exc:
            raise StorageError(f"cannot save index to {d}: {exc}") from exc

    @classmethod
    def load(cls, directory: str | Path) -> ExemplarIndex:
        d = Path(directory)
        try:
            blob = (d / EMBEDDINGS_FILE).read_bytes()
            meta = json.loads((d / POSTINGS_FILE).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"cannot load index from {d}: {exc}") from exc
        if blob[:4] != _MAGIC:
            raise StorageError("embeddings file has a bad magic number")
        try:
            (hlen,) = struct.unpack("<I", blob[4:8])
            header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
            dim, count, ids = header["dimension"], header["count"], header["ids"]
        except (struct.error, UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
            raise StorageError(f"embeddings header is unreadable: {exc}") from exc
        body = blob[8 + hlen :]
        if len(body) != 4 * dim * count or len(ids) != count:
            raise StorageError("embeddings file is truncated or inconsistent")
        data = np.frombuffer(body, dtype="<f4")
        mat = data.reshape(count, dim) if count else np.zeros((0, dim), np.float32)
        index = cls(dimension=dim or None)
        for row, eid in enumerate(ids):
            m = meta["entries"][eid]
            index.add(
                ExemplarEntry.build(eid, m["log_text"], m.get("context_text"), m["graph_ref"], mat[row].copy(), m.get("graph"))
            )
        if index._postings != {t: dict(p) for t, p in meta.get("postings", {}).items()}:
            raise StorageError("token postings do not match the stored entries")
        return index

    @classmethod
    def exists(cls, directory: str | Path) -> bool:
        d = Path(directory)
        return (d / EMBEDDINGS_FILE).exists() and (d / POSTINGS_FILE).exists()

    def extend(self, entries: Iterable[ExemplarEntry]) -> None:
        for e in entries:
            self.add(e)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
