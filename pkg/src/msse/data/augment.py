"""Geometric and photometric augmentation of uint8 RGB images."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import check_image, resize_bilinear, sample_bilinear, to_uint8


@dataclass(frozen=True)
class AugmentSpec:
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    max_rotation: float = 20.0          # degrees, symmetric
    crop_range: tuple = (0.8, 1.0)      # fraction of each side kept, (lo, hi]
    brightness_range: tuple = (-30.0, 30.0)
    contrast_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        for p in (self.hflip_prob, self.vflip_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("flip probabilities must lie in [0, 1]")
        if not 0.0 <= self.max_rotation <= 180.0:
            raise ValueError("max_rotation must lie in [0, 180]")
        lo, hi = self.crop_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("crop_range must satisfy 0 < lo <= hi <= 1")
        if self.brightness_range[0] > self.brightness_range[1]:
            raise ValueError("brightness_range is reversed")
        lo, hi = self.contrast_range
        if not 0.0 <= lo <= hi:
            raise ValueError("contrast_range must satisfy 0 <= lo <= hi")


def hflip(img):
    return np.ascontiguousarray(img[:, ::-1])


def vflip(img):
    return np.ascontiguousarray(img[::-1])


def rotate(img, degrees: float):
    """Rotate about the image centre with bilinear sampling and edge replication."""
    check_image(img)
    h, w, _ = img.shape
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: output pixel -> source location
    src_x = c * dx + s * dy + cx
    src_y = -s * dx + c * dy + cy
    return to_uint8(sample_bilinear(img.astype(np.float64), src_y, src_x))


def crop_resize(img, frac: float, rng: np.random.Generator | None = None):
    """Take a window of ``frac`` of each side (random offset, or centred without rng)
    and resize it back to the original size."""
    check_image(img)
    h, w, _ = img.shape
    ch, cw = max(1, round(frac * h)), max(1, round(frac * w))
    if rng is None:
        y0, x0 = (h - ch) // 2, (w - cw) // 2
    else:
        y0 = int(rng.integers(0, h - ch + 1))
        x0 = int(rng.integers(0, w - cw + 1))
    window = img[y0:y0 + ch, x0:x0 + cw].astype(np.float64)
    return to_uint8(resize_bilinear(window, h, w))


def brightness(img, delta: float):
    return to_uint8(img.astype(np.float64) + delta)


def contrast(img, factor: float):
    return to_uint8(128.0 + factor * (img.astype(np.float64) - 128.0))


def augment(img, spec: AugmentSpec, rng: np.random.Generator):
    """Random flips, rotation, crop, brightness and contrast, in that order."""
    out = check_image(img)
    if rng.random() < spec.hflip_prob:
        out = hflip(out)
    if rng.random() < spec.vflip_prob:
        out = vflip(out)
    out = rotate(out, rng.uniform(-spec.max_rotation, spec.max_rotation))
    lo, hi = spec.crop_range
    # (lo, hi]: reflect the half-open uniform draw
    frac = hi - rng.random() * (hi - lo)
    out = crop_resize(out, frac, rng)
    out = brightness(out, rng.uniform(*spec.brightness_range))
    return contrast(out, rng.uniform(*spec.contrast_range))
