"""Layer primitives with explicit forward and analytic backward passes.

Each ``*_forward`` returns its output together with a tape holding whatever
the matching ``*_backward`` needs. Parameter gradients accumulate into the
owning :class:`LayerParams`; call :meth:`LayerParams.zero_grads` between
optimiser steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import kernels
from .tensor import DTYPE, ShapeError, check4


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class Param:
    """A learnable tensor with its gradient and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)


class LayerParams:
    """Ordered, uniquely named collection of :class:`Param` entries."""

    def __init__(self, **values: np.ndarray):
        self._entries: dict[str, Param] = {}
        for name, value in values.items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Param(np.asarray(value))
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grads(self) -> None:
        for p in self._entries.values():
            p.grad[...] = 0

    def astype(self, dtype) -> "LayerParams":
        """Copy with every buffer cast to ``dtype`` (used by gradient checks)."""
        out = LayerParams()
        for name, p in self._entries.items():
            q = out.add(name, p.value.astype(dtype))
            q.grad[...] = p.grad
            q.m[...] = p.m
            q.v[...] = p.v
        return out


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=DTYPE) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    groups: int = 1
    stride: int = 1
    use_bias: bool = True
    padding: str = "same"

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "groups", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"ConvSpec.{name} must be positive")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"channels ({self.in_channels}, {self.out_channels}) not divisible by groups={self.groups}"
            )
        if self.padding != "same":
            raise ValueError("only 'same' padding is supported")

    @property
    def depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_h, self.kernel_w)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        return -(-h // self.stride), -(-w // self.stride)

    def init_params(self, rng: np.random.Generator, dtype=DTYPE) -> LayerParams:
        rf = self.kernel_h * self.kernel_w
        fan_in = self.in_channels // self.groups * rf
        fan_out = self.out_channels // self.groups * rf
        params = LayerParams(weight=glorot_uniform(rng, self.weight_shape, fan_in, fan_out, dtype))
        if self.use_bias:
            params.add("bias", np.zeros(self.out_channels, dtype=dtype))
        return params


def same_padding(size: int, k: int, stride: int) -> tuple[int, int, int]:
    """Return (out, pad_before, pad_after) for 'same' padding along one axis."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


@dataclass
class ConvTape:
    spec: ConvSpec
    params: LayerParams
    x_shape: tuple
    pads: tuple  # (top, bottom, left, right)
    out_hw: tuple
    saved: object  # padded input (depthwise) or per-group column matrices


def _pad(x: np.ndarray, pads) -> np.ndarray:
    t, b, l, r = pads
    if t == b == l == r == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (t, b), (l, r)))


def conv2d_forward(x: np.ndarray, spec: ConvSpec, params: LayerParams):
    """Grouped 2-D cross-correlation with zero 'same' padding plus bias."""
    check4(x)
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"conv expects {spec.in_channels} input channels, got {c}")
    weight = params["weight"].value
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"kernel shape {weight.shape} != expected {spec.weight_shape}")
    kh, kw, s = spec.kernel_h, spec.kernel_w, spec.stride
    oh, pt, pb = same_padding(h, kh, s)
    ow, pl, pr = same_padding(w, kw, s)
    if h + pt + pb < kh or w + pl + pr < kw:
        raise ShapeError("kernel larger than padded input")
    pads = (pt, pb, pl, pr)
    x = x.astype(weight.dtype, copy=False)

    if spec.depthwise:
        xpad = _pad(x, pads)
        y = kernels.depthwise_forward(xpad, np.ascontiguousarray(weight), s, oh, ow)
        saved = xpad
    else:
        g = spec.groups
        cg, og = c // g, spec.out_channels // g
        pointwise = kh == kw == s == 1
        xpad = None if pointwise else _pad(x, pads)
        saved, outs = [], []
        for gi in range(g):
            if pointwise:
                cols = np.ascontiguousarray(x[:, gi * cg:(gi + 1) * cg].reshape(n, cg, h * w))
            else:
                part = np.ascontiguousarray(xpad[:, gi * cg:(gi + 1) * cg])
                cols = kernels.im2col(part, kh, kw, s, oh, ow)
            wg = weight[gi * og:(gi + 1) * og].reshape(og, cg * kh * kw)
            outs.append(np.matmul(wg, cols))
            saved.append(cols)
        y = (outs[0] if g == 1 else np.concatenate(outs, axis=1)).reshape(n, spec.out_channels, oh, ow)
    if spec.use_bias:
        y = y + params["bias"].value[None, :, None, None]
    return y, ConvTape(spec, params, x.shape, pads, (oh, ow), saved)


def conv2d_backward(dy: np.ndarray, tape: ConvTape) -> np.ndarray:
    spec, params = tape.spec, tape.params
    n, c, h, w = tape.x_shape
    oh, ow = tape.out_hw
    if dy.shape != (n, spec.out_channels, oh, ow):
        raise ShapeError(f"upstream gradient {dy.shape} does not match forward output")
    weight = params["weight"].value
    dy = np.ascontiguousarray(dy, dtype=weight.dtype)
    kh, kw, s = spec.kernel_h, spec.kernel_w, spec.stride
    pt, pb, pl, pr = tape.pads
    hp, wp = h + pt + pb, w + pl + pr

    if spec.use_bias:
        params["bias"].grad += dy.sum(axis=(0, 2, 3), dtype=np.float64).astype(weight.dtype)

    if spec.depthwise:
        dxpad, dw = kernels.depthwise_backward(dy, tape.saved, np.ascontiguousarray(weight), s)
        params["weight"].grad += dw
    else:
        g = spec.groups
        cg, og = c // g, spec.out_channels // g
        pointwise = kh == kw == s == 1
        dyr = dy.reshape(n, spec.out_channels, oh * ow)
        parts = []
        for gi in range(g):
            cols = tape.saved[gi]
            dyg = dyr[:, gi * og:(gi + 1) * og]
            dwg = np.tensordot(dyg, cols, axes=([0, 2], [0, 2]))
            params["weight"].grad[gi * og:(gi + 1) * og] += dwg.reshape(og, cg, kh, kw)
            wg = weight[gi * og:(gi + 1) * og].reshape(og, cg * kh * kw)
            dcols = np.ascontiguousarray(np.matmul(wg.T, dyg))
            if pointwise:
                parts.append(dcols.reshape(n, cg, h, w))
            else:
                parts.append(kernels.col2im(dcols, cg, hp, wp, kh, kw, s, oh, ow))
        if pointwise:
            return parts[0] if g == 1 else np.concatenate(parts, axis=1)
        dxpad = parts[0] if g == 1 else np.concatenate(parts, axis=1)
    return dxpad[:, :, pt:pt + h, pl:pl + w]


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu_forward(x: np.ndarray):
    mask = x > 0
    return np.where(mask, x, x.dtype.type(0)), mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_forward(x: np.ndarray):
    s = sigmoid(x)
    return s, s


def sigmoid_backward(dy: np.ndarray, s: np.ndarray) -> np.ndarray:
    return dy * s * (1 - s)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------


def global_avg_pool_forward(x: np.ndarray):
    check4(x)
    v = x.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)
    return v, x.shape


def global_avg_pool_backward(dv: np.ndarray, x_shape) -> np.ndarray:
    n, c, h, w = x_shape
    dx = np.empty(x_shape, dtype=dv.dtype)
    dx[...] = (dv / (h * w))[:, :, None, None]
    return dx


def avg_pool2d_forward(x: np.ndarray, k: int = 2, s: int = 2):
    """Non-overlapping average pooling; spatial dims must tile exactly."""
    check4(x)
    if k != s:
        raise ValueError("avg_pool2d supports only non-overlapping windows (k == s)")
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool2d needs spatial dims divisible by {k}, got {h}x{w}")
    y = x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5), dtype=np.float64)
    return y.astype(x.dtype), (x.shape, k)


def avg_pool2d_backward(dy: np.ndarray, tape) -> np.ndarray:
    x_shape, k = tape
    dx = np.repeat(np.repeat(dy / (k * k), k, axis=2), k, axis=3)
    return dx.reshape(x_shape)


def max_pool2d_forward(x: np.ndarray, k: int = 3, s: int = 2):
    """Max pooling with zero 'same' padding; ties resolve to the first cell."""
    check4(x)
    n, c, h, w = x.shape
    oh, pt, pb = same_padding(h, k, s)
    ow, pl, pr = same_padding(w, k, s)
    xpad = _pad(x, (pt, pb, pl, pr))
    y, arg = kernels.maxpool_forward(xpad, k, s, oh, ow)
    return y, (x.shape, (pt, pl), xpad.shape[2:], arg)


def max_pool2d_backward(dy: np.ndarray, tape) -> np.ndarray:
    (n, c, h, w), (pt, pl), (hp, wp), arg = tape
    dxpad = kernels.maxpool_backward(np.ascontiguousarray(dy), arg, hp, wp)
    return dxpad[:, :, pt:pt + h, pl:pl + w]


# ---------------------------------------------------------------------------
# fully connected, dropout, loss
# ---------------------------------------------------------------------------


def dense_init(rng: np.random.Generator, n_in: int, n_out: int, dtype=DTYPE) -> LayerParams:
    return LayerParams(
        weight=glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype),
        bias=np.zeros(n_out, dtype=dtype),
    )


def dense_forward(v: np.ndarray, params: LayerParams):
    """``logits = v @ W + b`` with W shaped (in, out)."""
    weight = params["weight"].value
    if v.ndim != 2 or v.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense expects (n, {weight.shape[0]}) input, got {v.shape}")
    return v @ weight + params["bias"].value, (v, params)


def dense_backward(dout: np.ndarray, tape) -> np.ndarray:
    v, params = tape
    params["weight"].grad += v.T @ dout
    params["bias"].grad += dout.sum(axis=0, dtype=np.float64).astype(dout.dtype)
    return dout @ params["weight"].value.T


def dropout_forward(x: np.ndarray, p: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout. ``mode`` is ``"train"`` or ``"infer"``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if mode == "infer" or p == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask) -> np.ndarray:
    return dy if mask is None else dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent_forward(logits: np.ndarray, labels):
    """Mean cross-entropy over the batch. Returns (loss, probs, tape)."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    probs = np.exp(logp)
    loss = float(-logp[np.arange(n), labels].astype(np.float64).mean())
    return loss, probs, (probs, labels)


def softmax_xent_backward(tape, dloss: float = 1.0) -> np.ndarray:
    probs, labels = tape
    n = probs.shape[0]
    d = probs.copy()
    d[np.arange(n), labels] -= 1
    return d * probs.dtype.type(dloss / n)
