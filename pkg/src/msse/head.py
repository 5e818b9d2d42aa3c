"""Multi-scale squeeze-and-excitation classification head.

Flow for an input feature map ``x``::

    u = concat(pw3(relu(dw3(x))), pw5(relu(dw5(x))))   each pw followed by ReLU
    v = spatial_attention(se_attention(u))
    z = dropout(v) + u
    logits = fc(gap(z))

Spatial attention convolves the 2-channel [mean, max] channel descriptor
with a 7x7 kernel. The residual joins the fused map ``u`` because it is the
only tensor on the path with the same width as ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    ConvSpec, LayerParams, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    dense_init, dropout_backward, dropout_forward, global_avg_pool_backward,
    global_avg_pool_forward, relu_backward, relu_forward, sigmoid_backward, sigmoid_forward,
)
from .tensor import DTYPE, ShapeError, channel_stats, check4, concat_channels


@dataclass
class MsseHeadConfig:
    in_channels: int = 1920
    branch_kernels: tuple = (3, 5)
    proj_channels: int = 128
    se_ratio: int = 16
    spatial_kernel: int = 7
    dropout_rate: float = 0.3
    num_classes: int = 9

    def __post_init__(self):
        self.branch_kernels = tuple(int(k) for k in self.branch_kernels)
        if len(self.branch_kernels) != 2:
            raise ValueError("the head has exactly two branches")
        if min(self.in_channels, self.proj_channels, self.se_ratio, self.num_classes) < 1:
            raise ValueError("channel counts, se_ratio and num_classes must be positive")
        if self.fused_channels % self.se_ratio:
            raise ValueError(
                f"se_ratio {self.se_ratio} must divide fused channels {self.fused_channels}"
            )
        if self.spatial_kernel % 2 == 0:
            raise ValueError("spatial_kernel must be odd")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def fused_channels(self) -> int:
        return 2 * self.proj_channels

    @property
    def se_hidden(self) -> int:
        return self.fused_channels // self.se_ratio


# ---------------------------------------------------------------------------
# sub-blocks
# ---------------------------------------------------------------------------


def branch_forward(x, dw_spec, dw_params, pw_spec, pw_params):
    """Depthwise kxk conv -> ReLU -> 1x1 projection -> ReLU."""
    z1, t1 = conv2d_forward(x, dw_spec, dw_params)
    a1, r1 = relu_forward(z1)
    z2, t2 = conv2d_forward(a1, pw_spec, pw_params)
    a2, r2 = relu_forward(z2)
    return a2, (t1, r1, t2, r2)


def branch_backward(dy, tape):
    t1, r1, t2, r2 = tape
    return conv2d_backward(relu_backward(conv2d_backward(relu_backward(dy, r2), t2), r1), t1)


def se_forward(u, reduce_params, expand_params):
    """Squeeze (GAP) -> FC -> ReLU -> FC -> sigmoid gates; rescale channels."""
    check4(u, "u")
    fused = expand_params["weight"].value.shape[1]
    if u.shape[1] != fused:
        raise ShapeError(f"channel attention expects {fused} channels, got {u.shape[1]}")
    s, gt = global_avg_pool_forward(u)
    h1, d1 = dense_forward(s, reduce_params)
    a, rt = relu_forward(h1)
    h2, d2 = dense_forward(a, expand_params)
    gates, st = sigmoid_forward(h2)
    out = u * gates[:, :, None, None]
    return out, (u, gates, gt, d1, rt, d2, st)


def se_backward(dout, tape):
    u, gates, gt, d1, rt, d2, st = tape
    du = dout * gates[:, :, None, None]
    dgates = (dout * u).sum(axis=(2, 3))
    da = dense_backward(sigmoid_backward(dgates, st), d2)
    ds = dense_backward(relu_backward(da, rt), d1)
    return du + global_avg_pool_backward(ds, gt)


def spatial_forward(u, spec, params):
    """Mask every channel by ``sigmoid(conv([mean_c(u), max_c(u)]))``."""
    check4(u, "u")
    avg, mx = channel_stats(u)
    desc = concat_channels([avg, mx])
    z, ct = conv2d_forward(desc, spec, params)
    mask, st = sigmoid_forward(z)
    out = u * mask
    argmax = u.argmax(axis=1)
    return out, (u, mask, ct, st, argmax)


def spatial_backward(dout, tape):
    u, mask, ct, st, argmax = tape
    n, c, h, w = u.shape
    du = dout * mask
    dmask = (dout * u).sum(axis=1, keepdims=True)
    ddesc = conv2d_backward(sigmoid_backward(dmask, st), ct)
    du += ddesc[:, 0:1] / c
    bi, yi, xi = np.indices((n, h, w))
    du[bi, argmax, yi, xi] += ddesc[:, 1]
    return du


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------


class MsseHead:
    """The multi-scale attention head with forward and backward passes."""

    def __init__(self, config: MsseHeadConfig | None = None, seed: int = 0, dtype=DTYPE):
        self.config = cfg = config or MsseHeadConfig()
        rng = np.random.default_rng(seed)
        self.specs: dict[str, ConvSpec] = {}
        self.params: dict[str, LayerParams] = {}
        for k in cfg.branch_kernels:
            self.specs[f"dw{k}"] = ConvSpec(cfg.in_channels, cfg.in_channels, k, k,
                                            groups=cfg.in_channels)
            self.specs[f"pw{k}"] = ConvSpec(cfg.in_channels, cfg.proj_channels, 1, 1)
        self.specs["spatial"] = ConvSpec(2, 1, cfg.spatial_kernel, cfg.spatial_kernel)
        for k in cfg.branch_kernels:
            self.params[f"dw{k}"] = self.specs[f"dw{k}"].init_params(rng, dtype)
            self.params[f"pw{k}"] = self.specs[f"pw{k}"].init_params(rng, dtype)
        self.params["se_reduce"] = dense_init(rng, cfg.fused_channels, cfg.se_hidden, dtype)
        self.params["se_expand"] = dense_init(rng, cfg.se_hidden, cfg.fused_channels, dtype)
        self.params["spatial"] = self.specs["spatial"].init_params(rng, dtype)
        self.params["classifier"] = dense_init(rng, cfg.fused_channels, cfg.num_classes, dtype)

    def named_params(self) -> dict[str, LayerParams]:
        return {f"head.{k}": v for k, v in self.params.items()}

    def astype(self, dtype) -> "MsseHead":
        clone = object.__new__(MsseHead)
        clone.config = self.config
        clone.specs = dict(self.specs)
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return clone

    # -- sub-blocks bound to this head's parameters --------------------------

    def branch_forward(self, x, k):
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(f"head expects {self.config.in_channels} channels, got {x.shape[1]}")
        return branch_forward(x, self.specs[f"dw{k}"], self.params[f"dw{k}"],
                              self.specs[f"pw{k}"], self.params[f"pw{k}"])

    def se_channel_attention(self, u):
        return se_forward(u, self.params["se_reduce"], self.params["se_expand"])

    def spatial_attention(self, u):
        return spatial_forward(u, self.specs["spatial"], self.params["spatial"])

    # -- full pass ----------------------------------------------------------

    def forward(self, features, mode="infer", rng=None):
        """Return (logits, tape). ``mode`` is ``"train"`` or ``"infer"``."""
        check4(features, "features")
        k3, k5 = self.config.branch_kernels
        b3, t3 = self.branch_forward(features, k3)
        b5, t5 = self.branch_forward(features, k5)
        u = concat_channels([b3, b5])
        se, tse = self.se_channel_attention(u)
        v, tsp = self.spatial_attention(se)
        w, tdo = dropout_forward(v, self.config.dropout_rate, mode, rng)
        z = w + u
        pooled, tg = global_avg_pool_forward(z)
        logits, tfc = dense_forward(pooled, self.params["classifier"])
        tape = dict(t3=t3, t5=t5, tse=tse, tsp=tsp, tdo=tdo, tg=tg, tfc=tfc,
                    z=z, split=b3.shape[1])
        return logits, tape

    def backward(self, dlogits, tape):
        """Accumulate parameter gradients; return d(loss)/d(features)."""
        dpooled = dense_backward(dlogits, tape["tfc"])
        dz = global_avg_pool_backward(dpooled, tape["tg"])
        dv = dropout_backward(dz, tape["tdo"])
        du = dz + se_backward(spatial_backward(dv, tape["tsp"]), tape["tse"])
        p = tape["split"]
        return (branch_backward(np.ascontiguousarray(du[:, :p]), tape["t3"])
                + branch_backward(np.ascontiguousarray(du[:, p:]), tape["t5"]))

    # -- Grad-CAM hooks: the target maps are the post-residual tensor z -----

    def feature_maps(self, features):
        return self.forward(features, "infer")[1]["z"]

    def scores_from_maps(self, maps):
        pooled, _ = global_avg_pool_forward(maps)
        return pooled @ self.params["classifier"]["weight"].value + self.params["classifier"]["bias"].value

    def score_grad(self, maps, target_class):
        n, c, h, w = maps.shape
        col = self.params["classifier"]["weight"].value[:, target_class]
        return np.broadcast_to(col[None, :, None, None] / (h * w), maps.shape).astype(maps.dtype)


class GapFcHead:
    """Baseline head: global average pooling followed by a linear classifier."""

    def __init__(self, in_channels: int, num_classes: int = 9, seed: int = 0, dtype=DTYPE):
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.params = {"classifier": dense_init(np.random.default_rng(seed), in_channels,
                                                num_classes, dtype)}

    def named_params(self) -> dict[str, LayerParams]:
        return {f"head.{k}": v for k, v in self.params.items()}

    def forward(self, features, mode="infer", rng=None):
        check4(features, "features")
        if features.shape[1] != self.in_channels:
            raise ShapeError(f"head expects {self.in_channels} channels, got {features.shape[1]}")
        pooled, tg = global_avg_pool_forward(features)
        logits, tfc = dense_forward(pooled, self.params["classifier"])
        return logits, dict(tg=tg, tfc=tfc)

    def backward(self, dlogits, tape):
        return global_avg_pool_backward(dense_backward(dlogits, tape["tfc"]), tape["tg"])
