"""8-bit RGB images as ``(h, w, 3)`` uint8 arrays, plus binary PPM (P6) IO."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def check_image(img: np.ndarray) -> np.ndarray:
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3 or min(img.shape[:2]) < 1:
        raise ImageFormatError(f"expected (h, w, 3) uint8 image, got {img.dtype} {img.shape}")
    return img


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise ImageFormatError(f"not a binary PPM (magic {data[:2]!r})")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("malformed PPM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ImageFormatError(f"malformed PPM header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad PPM size {width}x{height}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("malformed PPM header: missing separator before pixels")
    pos += 1
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated PPM payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(img: np.ndarray) -> bytes:
    check_image(img)
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def load_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def save_ppm(img: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_ppm(img))


def grayscale(img: np.ndarray) -> np.ndarray:
    f = img.astype(np.float64)
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


def resize_bilinear(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2-D or (h, w, c) float array, half-pixel centres.

    Sample positions are clamped to the border (edge replication).
    """
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    return sample_bilinear(a, ys[:, None], xs[None, :])


def sample_bilinear(a: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample ``a`` at fractional (ys, xs), clamping coordinates to the image."""
    h, w = a.shape[:2]
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    if a.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    # a + f * (b - a) keeps constant regions exactly constant
    top = a[y0, x0] + fx * (a[y0, x1] - a[y0, x0])
    bot = a[y1, x0] + fx * (a[y1, x1] - a[y1, x0])
    return top + fy * (bot - top)


def to_uint8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def to_tensor(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(n, h, w, 3) uint8 -> (n, 3, h, w) floats in [0, 1]."""
    return (images.astype(dtype) / dtype(255.0)).transpose(0, 3, 1, 2).copy()
