"""64-bit DCT perceptual hash.

Steps: luma (0.299 R + 0.587 G + 0.114 B) -> bilinear 32x32 -> orthonormal
2-D DCT-II -> top-left 8x8 block -> bit i set iff coefficient i is strictly
above the block median (DC included). Bits are packed row-major with bit 0
holding coefficient (0, 0).
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn

from .image import check_image, grayscale, resize_bilinear

HASH_BITS = 64


def dct_block(img: np.ndarray) -> np.ndarray:
    """The 8x8 low-frequency DCT block the hash thresholds."""
    check_image(img)
    small = resize_bilinear(grayscale(img), 32, 32)
    return dctn(small, type=2, norm="ortho")[:8, :8]


def bits_to_int(bits: np.ndarray) -> int:
    return sum(1 << i for i, b in enumerate(bits.ravel()) if b)


def phash64(img: np.ndarray) -> int:
    block = dct_block(img)
    return bits_to_int(block > np.median(block))


def hamming(a: int, b: int) -> int:
    return (int(a) ^ int(b)).bit_count()


def similarity(a: int, b: int) -> float:
    return 1.0 - hamming(a, b) / HASH_BITS


def to_hex(h: int) -> str:
    return f"{int(h):016x}"


def from_hex(s: str) -> int:
    if len(s) != 16:
        raise ValueError(f"pHash hex must be 16 characters, got {s!r}")
    return int(s, 16)
