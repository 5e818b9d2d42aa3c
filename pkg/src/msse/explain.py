"""Grad-CAM heatmaps and colour overlays.

The model only needs three hooks: ``feature_maps(x)`` returning the target
maps A (1, C, h, w), ``scores_from_maps(A)`` giving class scores and
``score_grad(A, c)`` giving dy_c/dA. :class:`msse.model.Classifier` and
:class:`msse.head.MsseHead` both provide them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data.image import check_image, resize_bilinear, to_tensor, to_uint8


@dataclass
class Heatmap:
    values: np.ndarray          # (H, W) in [0, 1]
    target_class: int
    source_hw: tuple            # spatial size of the feature maps
    all_zero: bool = False
    alphas: np.ndarray | None = None

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])


def normalize(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    """Min-max to [0, 1]; an all-zero (or flat) map comes back as zeros, flagged."""
    lo, hi = float(raw.min()), float(raw.max())
    if hi <= lo or hi == 0.0:
        return np.zeros_like(raw, dtype=np.float64), True
    return (raw - lo) / (hi - lo), False


def cam_from_maps(maps: np.ndarray, grads: np.ndarray):
    """Return (alphas (C,), raw map (h, w)) for a single sample."""
    alphas = grads[0].astype(np.float64).mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(alphas, maps[0].astype(np.float64), axes=1), 0.0)
    return alphas, raw


def grad_cam(model, x, target_class: int, output_size=None) -> Heatmap:
    """Grad-CAM for one input.

    ``x`` is an (H, W, 3) uint8 image or a (1, 3, H, W) float tensor.
    ``output_size`` is (H, W); by default the input size.
    """
    if isinstance(x, np.ndarray) and x.dtype == np.uint8:
        x = to_tensor(check_image(x)[None])
    if x.ndim != 4 or x.shape[0] != 1:
        raise ValueError(f"grad_cam takes a single input, got shape {x.shape}")
    maps = model.feature_maps(x)
    k = model.scores_from_maps(maps).shape[-1]
    if not 0 <= target_class < k:
        raise ValueError(f"target_class {target_class} outside [0, {k})")
    alphas, raw = cam_from_maps(maps, model.score_grad(maps, target_class))
    norm, flat = normalize(raw)
    out_h, out_w = output_size or x.shape[2:]
    values = np.clip(resize_bilinear(norm, out_h, out_w), 0.0, 1.0)
    return Heatmap(values, target_class, raw.shape, flat, alphas)


def color_table() -> np.ndarray:
    """Fixed 256-entry blue -> cyan -> yellow -> red table, uint8 (256, 3)."""
    t = np.linspace(0.0, 1.0, 256)
    r = np.clip(1.5 - np.abs(4 * t - 3), 0, 1)
    g = np.clip(1.5 - np.abs(4 * t - 2), 0, 1)
    b = np.clip(1.5 - np.abs(4 * t - 1), 0, 1)
    return to_uint8(255 * np.stack([r, g, b], axis=1))


COLOR_TABLE = color_table()


def render_heatmap_overlay(image: np.ndarray, heatmap, alpha: float = 0.4) -> np.ndarray:
    """Blend ``alpha * colour + (1 - alpha) * pixel``; heatmap must match the image size."""
    check_image(image)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    values = heatmap.values if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    if values.shape != image.shape[:2]:
        raise ValueError(f"heatmap {values.shape} does not match image {image.shape[:2]}")
    idx = np.rint(np.clip(values, 0.0, 1.0) * 255).astype(np.int64)
    color = COLOR_TABLE[idx].astype(np.float64)
    return to_uint8(alpha * color + (1.0 - alpha) * image.astype(np.float64))
