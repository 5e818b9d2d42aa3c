"""Pure numpy versions of the hot loops.

Every function mirrors the compiled module ``_ckernels`` argument for
argument. Inputs are already padded; callers own padding and cropping.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(xpad, kh, kw, stride, oh, ow):
    # (n, c, oh, ow, kh, kw) view
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))
    return win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]


def im2col(xpad, kh, kw, stride, oh, ow):
    """Unfold to (n, c*kh*kw, oh*ow), row order (c, ki, kj)."""
    n, c = xpad.shape[:2]
    win = _windows(xpad, kh, kw, stride, oh, ow)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(cols, c, hp, wp, kh, kw, stride, oh, ow):
    n = cols.shape[0]
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (oh - 1) * stride + 1 : stride,
                j : j + (ow - 1) * stride + 1 : stride] += cols[:, :, i, j]
    return out


def depthwise_forward(xpad, w, stride, oh, ow):
    """w has shape (c, 1, kh, kw); no bias."""
    n, c = xpad.shape[:2]
    kh, kw = w.shape[2:]
    y = np.zeros((n, c, oh, ow), dtype=xpad.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xpad[:, :, i : i + (oh - 1) * stride + 1 : stride,
                         j : j + (ow - 1) * stride + 1 : stride]
            y += w[None, :, 0, i, j, None, None] * patch
    return y


def depthwise_backward(dy, xpad, w, stride):
    """Return (dxpad, dw) for :func:`depthwise_forward`."""
    oh, ow = dy.shape[2:]
    kh, kw = w.shape[2:]
    dxpad = np.zeros_like(xpad)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None),
                  slice(i, i + (oh - 1) * stride + 1, stride),
                  slice(j, j + (ow - 1) * stride + 1, stride))
            dw[:, 0, i, j] = (dy * xpad[sl]).sum(axis=(0, 2, 3), dtype=np.float64)
            dxpad[sl] += w[None, :, 0, i, j, None, None] * dy
    return dxpad, dw


def maxpool_forward(xpad, k, stride, oh, ow):
    """Return (y, argmax) where argmax is the flat index into the padded plane.

    Ties go to the first cell in row-major window order.
    """
    n, c, hp, wp = xpad.shape
    win = _windows(xpad, k, k, stride, oh, ow).reshape(n, c, oh, ow, k * k)
    local = win.argmax(axis=-1)
    y = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    ki, kj = np.divmod(local, k)
    rows = np.arange(oh)[:, None] * stride + ki
    cols = np.arange(ow)[None, :] * stride + kj
    return np.ascontiguousarray(y), (rows * wp + cols).astype(np.int64)


def maxpool_backward(dy, argmax, hp, wp):
    n, c = dy.shape[:2]
    flat = np.zeros((n * c, hp * wp), dtype=dy.dtype)
    idx = argmax.reshape(n * c, -1)
    np.add.at(flat, (np.arange(n * c)[:, None], idx), dy.reshape(n * c, -1))
    return flat.reshape(n, c, hp, wp)
