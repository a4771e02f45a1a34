"""Hybrid exemplar retrieval: vector + BM25 search, fusion, MMR."""

from .embedding import Embedder, HashingEmbedder, RemoteEmbedder, cosine, embedder_from_config
from .index import ExemplarEntry, ExemplarIndex
from .ranking import MMRParams, ScoredCandidate, bm25_scores, fuse, mmr_select, tokenize

__all__ = [
    "Embedder",
    "ExemplarEntry",
    "ExemplarIndex",
    "HashingEmbedder",
    "MMRParams",
    "RemoteEmbedder",
    "ScoredCandidate",
    "bm25_scores",
    "cosine",
    "embedder_from_config",
    "fuse",
    "mmr_select",
    "tokenize",
]
