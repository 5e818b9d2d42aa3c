"""Greedy perceptual-hash de-duplication."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .phash import HASH_BITS


@dataclass(frozen=True)
class Rejection:
    index: int          # position of the rejected record in the input
    nearest: int        # position of the most similar retained record
    similarity: float


def _popcount(x: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x)
    x = x.copy()
    out = np.zeros(x.shape, dtype=np.int64)
    while x.any():
        out += (x & np.uint64(1)).astype(np.int64)
        x >>= np.uint64(1)
    return out


def dedup_filter(hashes: Sequence[int], tau: float = 0.30):
    """Scan in order; keep a hash iff its similarity to every kept hash is < tau.

    Similarity is ``1 - hamming / 64``. Returns (kept indices, rejections).
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    arr = np.array([int(h) for h in hashes], dtype=np.uint64)
    kept = np.empty(len(arr), dtype=np.uint64)
    kept_idx: list[int] = []
    rejections: list[Rejection] = []
    for i, h in enumerate(arr):
        if kept_idx:
            sims = 1.0 - _popcount(kept[:len(kept_idx)] ^ h) / HASH_BITS
            j = int(np.argmax(sims))
            if sims[j] >= tau:
                rejections.append(Rejection(i, kept_idx[j], float(sims[j])))
                continue
        kept[len(kept_idx)] = h
        kept_idx.append(i)
    return kept_idx, rejections
