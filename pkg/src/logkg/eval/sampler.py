"""Embedding-diverse dataset sampling.

Candidates are drawn uniformly at random without replacement; a candidate is
kept only if its cosine distance to every already-kept event is at least
``threshold``.
"""

from __future__ import annotations

import random
from typing import Callable, Sequence

import numpy as np

from ..errors import DiversityExhausted

DEFAULT_THRESHOLD = 0.7


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0
    return 1.0 - float(np.dot(a, b)) / (na * nb)


def sample_dataset(
    events: Sequence[str],
    n: int,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int | None = 0,
    embed: Callable[[str], np.ndarray] | None = None,
    max_rejections: int | None = None,
) -> list[str]:
    """Pick ``n`` mutually dissimilar events.

    Raises :class:`DiversityExhausted` when the pool runs out or more than
    ``max_rejections`` draws were rejected (default: no bound beyond the pool).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if embed is None:
        from ..retrieval.embedding import HashingEmbedder

        embed = HashingEmbedder().embed
    rng = random.Random(seed)
    pool = list(range(len(events)))
    rng.shuffle(pool)
    chosen: list[int] = []
    vectors: list[np.ndarray] = []
    rejected = 0
    for idx in pool:
        emb = np.asarray(embed(events[idx]), dtype=np.float64)
        if all(cosine_distance(emb, other) >= threshold for other in vectors):
            chosen.append(idx)
            vectors.append(emb)
            if len(chosen) == n:
                return [events[i] for i in chosen]
        else:
            rejected += 1
            if max_rejections is not None and rejected > max_rejections:
                break
    raise DiversityExhausted(
        f"found {len(chosen)} of {n} events at cosine distance >= {threshold} ({rejected} rejected draws)"
    )
