"""Embedding providers.

``HashingEmbedder`` is the built-in deterministic embedder: seeded feature
hashing of character trigrams, signed buckets, unit-normalised. It is what
tests and offline runs use. ``RemoteEmbedder`` talks to an
OpenAI-compatible ``/embeddings`` endpoint.
"""

from __future__ import annotations

import hashlib
import os
from typing import Any, Mapping, Protocol

import httpx
import numpy as np

from ..errors import ConfigError, ProviderUnavailable


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def describe(self) -> dict[str, Any]: ...


class HashingEmbedder:
    def __init__(self, dimension: int = 256, seed: int = 0, ngram: int = 3) -> None:
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self.ngram = ngram
        self._key = seed.to_bytes(8, "little", signed=True)

    def _features(self, text: str) -> list[str]:
        padded = f" {text.lower()} "
        n = self.ngram
        if len(padded) < n:
            return [padded]
        return [padded[i : i + n] for i in range(len(padded) - n + 1)]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for feat in self._features(text):
            h = hashlib.blake2b(feat.encode("utf-8"), digest_size=8, key=self._key).digest()
            x = int.from_bytes(h, "little")
            bucket = x % self.dimension
            sign = 1.0 if (x >> 63) & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec.astype(np.float32)

    def describe(self) -> dict[str, Any]:
        return {"kind": "test", "dimension": self.dimension, "seed": self.seed}


class RemoteEmbedder:
    def __init__(
        self,
        endpoint: str,
        model: str,
        dimension: int | None = None,
        timeout: float = 30.0,
        api_key_env: str | None = None,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.dimension = dimension or 0
        self.timeout = timeout
        self.api_key_env = api_key_env
        self._client = client

    def embed(self, text: str) -> np.ndarray:
        headers = {}
        if self.api_key_env and os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        client = self._client or httpx.Client(timeout=self.timeout)
        try:
            resp = client.post(self.endpoint, json={"model": self.model, "input": [text]}, headers=headers)
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float32)
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderUnavailable(f"embedding request failed: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        if self.dimension == 0:
            self.dimension = int(vec.shape[0])
        return vec

    def describe(self) -> dict[str, Any]:
        return {"kind": "remote", "endpoint": self.endpoint, "model": self.model}


def embedder_from_config(cfg: Mapping[str, Any] | None) -> Embedder:
    cfg = dict(cfg or {"kind": "test"})
    kind = cfg.get("kind", "test")
    if kind == "test":
        return HashingEmbedder(dimension=int(cfg.get("dimension", 256)), seed=int(cfg.get("seed", 0)))
    if kind == "remote":
        if not cfg.get("endpoint") or not cfg.get("model"):
            raise ConfigError("remote embedder needs 'endpoint' and 'model'")
        return RemoteEmbedder(
            cfg["endpoint"],
            cfg["model"],
            dimension=cfg.get("dimension"),
            timeout=float(cfg.get("timeout_s", 30.0)),
            api_key_env=cfg.get("api_key_env"),
        )
    raise ConfigError(f"unknown embedder kind {kind!r}")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
