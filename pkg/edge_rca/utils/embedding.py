"""
Deterministic local embedder: hashed character trigrams per whitespace token,
L2-normalized. Same text gives the same vector on every platform.
"""
from typing import Iterable, List

import numpy as np

from edge_rca.utils.errors import DimensionMismatch, EmptyTextError, ZeroVectorError
from edge_rca.utils.specs import EmbeddingVector
from edge_rca.utils.text import norm

DEFAULT_DIM = 256

# FNV-1a 64-bit; the offset basis is xor-ed with a fixed seed.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
HASH_SEED = 0x5EED2024
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: str, seed: int = HASH_SEED) -> int:
    h = (_FNV_OFFSET ^ seed) & _MASK64
    for byte in data.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def trigrams(text: str) -> List[str]:
    grams: List[str] = []
    for token in text.split(" "):
        if not token:
            continue
        if len(token) < 3:
            grams.append(token)
        else:
            grams.extend(token[i:i + 3] for i in range(len(token) - 2))
    return grams


def embed(text: str, dim: int = DEFAULT_DIM) -> EmbeddingVector:
    canonical = norm(text)
    if not canonical:
        raise EmptyTextError("cannot embed empty text")
    buckets = np.fromiter((fnv1a64(g) % dim for g in trigrams(canonical)), dtype=np.int64)
    values = np.bincount(buckets, minlength=dim).astype(np.float64)
    n = float(np.linalg.norm(values))
    return EmbeddingVector(values=values / n, norm=1.0)


def embed_many(texts: Iterable[str], dim: int = DEFAULT_DIM) -> np.ndarray:
    """Row-stacked embeddings, shape (n, dim)."""
    rows = [embed(t, dim).values for t in texts]
    if not rows:
        return np.zeros((0, dim))
    return np.vstack(rows)


def cosine_sim(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(np.dot(a.values, b.values) / (na * nb))
