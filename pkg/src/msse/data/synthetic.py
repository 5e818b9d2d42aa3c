"""Synthetic 9-class texture corpus standing in for real damage photographs.

Class ``k`` is a sinusoidal grating with its own orientation and spatial
period. Each image gets a random phase, small orientation/period jitter,
random contrast, a per-channel tint and additive noise.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .image import save_ppm, to_uint8

CLASS_NAMES = ["brick", "cob", "concrete", "decks", "pavements", "road", "stone", "tile", "walls"]

# orientation in degrees and period in pixels per class
ORIENTATIONS = np.arange(9) * 20.0
PERIODS = np.array([6.0, 11.0, 8.0, 13.0, 7.0, 10.0, 14.0, 9.0, 12.0])


def grating(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    theta = np.deg2rad(ORIENTATIONS[label] + rng.uniform(-3.0, 3.0))
    period = PERIODS[label] * rng.uniform(0.95, 1.05)
    phase = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    wave = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
    amp = rng.uniform(50.0, 100.0)
    base = rng.uniform(100.0, 156.0)
    tint = rng.uniform(0.85, 1.15, size=3)
    img = base + amp * wave[..., None] * tint + rng.normal(0.0, 12.0, size=(size, size, 3))
    return to_uint8(img)


def make_gratings(per_class: int = 300, size: int = 56, seed: int = 0, num_classes: int = 9):
    """Return (images (N, size, size, 3) uint8, labels (N,) int64), class-major order."""
    rng = np.random.default_rng(seed)
    images = np.empty((per_class * num_classes, size, size, 3), dtype=np.uint8)
    labels = np.repeat(np.arange(num_classes), per_class)
    for i, k in enumerate(labels):
        images[i] = grating(int(k), size, rng)
    return images, labels


def write_corpus(root, per_class: int = 20, size: int = 56, seed: int = 0,
                 num_classes: int = 9) -> list[Path]:
    """Write the corpus as ``root/<class>/<index>.ppm``."""
    images, labels = make_gratings(per_class, size, seed, num_classes)
    root = Path(root)
    paths = []
    for i, (img, k) in enumerate(zip(images, labels)):
        d = root / CLASS_NAMES[k]
        d.mkdir(parents=True, exist_ok=True)
        p = d / f"{i:05d}.ppm"
        save_ppm(img, p)
        paths.append(p)
    return paths
