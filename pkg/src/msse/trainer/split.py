"""Stratified train/val/test assignment."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import replace

import numpy as np

from ..data.manifest import Manifest


def split_counts(n: int, ratios=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    """floor / floor / remainder, keeping every count within one of its exact share.

    The remainder can overshoot by up to two (n = 9 gives 7/0/2); one image
    then moves from test to val.
    """
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = n - n_train - n_val
    if n_test - ratios[2] * n > 1 + 1e-9:
        n_val += 1
        n_test -= 1
    return n_train, n_val, n_test


def stratified_split(manifest: Manifest, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> Manifest:
    """Shuffle each class with a seeded rng and assign train/val/test.

    Classes are visited in sorted order with one shared generator. Augmented
    records inherit the split of their source image.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    by_class = defaultdict(list)
    for i, r in enumerate(manifest.records):
        if r.origin == "original":
            by_class[r.label].append(i)
    rng = np.random.default_rng(seed)
    split_of: dict[int, str] = {}
    for label in sorted(by_class):
        idx = by_class[label]
        if len(idx) < 3:
            raise ValueError(f"class {label!r} has {len(idx)} images; at least 3 are needed")
        order = rng.permutation(len(idx))
        n_train, n_val, _ = split_counts(len(idx), ratios)
        for rank, j in enumerate(order):
            split_of[idx[j]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    by_path = {manifest.records[i].path: s for i, s in split_of.items()}
    records = []
    for i, r in enumerate(manifest.records):
        s = split_of[i] if r.origin == "original" else by_path[r.source_id]
        records.append(replace(r, split=s))
    return Manifest(records)
