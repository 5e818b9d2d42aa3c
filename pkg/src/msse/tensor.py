"""Shape helpers for the 4-axis (n, c, h, w) arrays used throughout.

Tensors are plain :class:`numpy.ndarray` objects. The helpers here only add
shape checking and the handful of channel-axis operations the network needs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

DTYPE = np.float32
GRAD_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


def check4(x: np.ndarray, name: str = "x") -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (n, c, h, w), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name} has an empty axis: {x.shape}")
    return x


def new_filled(shape: Sequence[int], value: float, dtype=DTYPE) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise ShapeError(f"expected a 4-tuple shape, got {shape}")
    if min(shape) < 1:
        raise ShapeError(f"all shape components must be >= 1, got {shape}")
    return np.full(shape, value, dtype=dtype)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def ew_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def ew_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a * b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return a * a.dtype.type(s)


def concat_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Stack tensors along the channel axis.

    Part ``i`` occupies the channel band directly after parts ``0..i-1``.
    """
    if len(parts) == 0:
        raise ShapeError("concat_channels needs at least one part")
    n, _, h, w = check4(parts[0], "parts[0]").shape
    for i, p in enumerate(parts[1:], start=1):
        check4(p, f"parts[{i}]")
        if (p.shape[0], p.shape[2], p.shape[3]) != (n, h, w):
            raise ShapeError(
                f"parts[{i}] has shape {p.shape}, expected (n, h, w) = {(n, h, w)}"
            )
    return np.concatenate(parts, axis=1)


def split_channels(x: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    """Inverse of :func:`concat_channels` for known band sizes."""
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"band sizes {list(sizes)} do not sum to {x.shape[1]} channels")
    out, start = [], 0
    for s in sizes:
        out.append(x[:, start:start + s])
        start += s
    return out


def channel_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean and max across channels, each shaped (n, 1, h, w).

    The mean is accumulated in float64 and cast back to the input dtype.
    """
    check4(x)
    avg = x.mean(axis=1, keepdims=True, dtype=np.float64).astype(x.dtype)
    mx = x.max(axis=1, keepdims=True)
    return avg, mx
