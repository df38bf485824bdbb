"""Deterministic text embeddings and cosine similarity.

The default embedder is a hashed bag-of-tokens vector: each token is hashed
to one of ``dimension`` buckets, counts are accumulated and L2-normalized.
It is dependency-free and stable across runs and processes, which makes
retrieval tests reproducible. Production deployments can plug any embedder
that satisfies the same protocol.
"""
from __future__ import annotations

import hashlib
import re
import threading
from typing import Protocol, runtime_checkable

import numpy as np

DEFAULT_DIMENSION = 256

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


@runtime_checkable
class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero vectors score 0 by definition."""
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    score = float(np.dot(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, score))


def _bucket(token: str, dimension: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).hexdigest()
    return int(digest, 16) % dimension


class HashedEmbedder:
    """Hashed bag-of-tokens embedder; deterministic and process-stable."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            vec[_bucket(token, self.dimension)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class CachingEmbedder:
    """Wraps an embedder with an exact-text cache, safe for concurrent use."""

    def __init__(self, inner: Embedder):
        self._inner = inner
        self.dimension = inner.dimension
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = self._inner.embed(text)
        with self._lock:
            self._cache.setdefault(text, vec)
        return vec
