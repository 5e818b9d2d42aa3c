"""Feature extractors feeding the classification head.

:class:`MiniDenseNet` is a small densely connected network: a strided stem,
dense blocks whose layers see the concatenation of every earlier feature map
in the block, and 1x1-conv + 2x2 average-pool transitions between blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .layers import (
    ConvSpec, LayerParams, avg_pool2d_backward, avg_pool2d_forward, conv2d_backward,
    conv2d_forward, max_pool2d_backward, max_pool2d_forward, relu_backward, relu_forward,
)
from .tensor import DTYPE, ShapeError, check4, concat_channels


class FeatureExtractor:
    """Interface: images (n, 3, H, W) -> feature maps (n, C, h, w).

    Subclasses advertise ``output_shape`` and may expose parameters through
    :meth:`named_params`. A frozen extractor (``trainable = False``) must be a
    pure function of its input.
    """

    trainable: bool = False

    @property
    def output_shape(self) -> tuple[int, int, int]:
        raise NotImplementedError

    @property
    def output_channels(self) -> int:
        return self.output_shape[0]

    @property
    def output_h(self) -> int:
        return self.output_shape[1]

    @property
    def output_w(self) -> int:
        return self.output_shape[2]

    def named_params(self) -> dict[str, LayerParams]:
        return {}

    def forward(self, images: np.ndarray):
        """Return (features, tape). The default tape is ``None``."""
        return self.extract(images), None

    def backward(self, dfeatures: np.ndarray, tape) -> np.ndarray | None:
        return None

    def extract(self, images: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ConstantExtractor(FeatureExtractor):
    """Returns the same feature tensor for every image; handy in tests."""

    def __init__(self, features: np.ndarray):
        self.features = check4(np.asarray(features))[0]

    @property
    def output_shape(self):
        return self.features.shape

    def extract(self, images):
        n = images.shape[0]
        return np.repeat(self.features[None], n, axis=0)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def dense_block_forward(x: np.ndarray, layers: Sequence[tuple[ConvSpec, LayerParams]]):
    """Run ``x_l = H_l([x_0, ..., x_{l-1}])`` and return ``[x_0, ..., x_L]``.

    ``H_l`` is a 3x3 'same' convolution followed by ReLU.
    """
    check4(x)
    if layers and layers[0][0].in_channels != x.shape[1]:
        raise ShapeError(
            f"dense block expects {layers[0][0].in_channels} channels, got {x.shape[1]}"
        )
    feats = [x]
    tapes = []
    for spec, params in layers:
        inp = feats[0] if len(feats) == 1 else concat_channels(feats)
        z, ct = conv2d_forward(inp, spec, params)
        a, rt = relu_forward(z)
        feats.append(a)
        tapes.append((ct, rt))
    y = feats[0] if len(feats) == 1 else concat_channels(feats)
    return y, ([f.shape[1] for f in feats], tapes)


def dense_block_backward(dy: np.ndarray, tape) -> np.ndarray:
    widths, tapes = tape
    bounds = np.cumsum([0] + widths)
    dfeats = [dy[:, bounds[i]:bounds[i + 1]].copy() for i in range(len(widths))]
    for l in range(len(tapes) - 1, -1, -1):
        ct, rt = tapes[l]
        dz = relu_backward(dfeats[l + 1], rt)
        dinp = conv2d_backward(dz, ct)
        for i in range(l + 1):
            dfeats[i] += dinp[:, bounds[i]:bounds[i + 1]]
    return dfeats[0]


def transition_forward(x: np.ndarray, spec: ConvSpec, params: LayerParams):
    check4(x)
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"transition needs even spatial dims, got {x.shape[2]}x{x.shape[3]}")
    z, ct = conv2d_forward(x, spec, params)
    y, pt = avg_pool2d_forward(z, 2, 2)
    return y, (ct, pt)


def transition_backward(dy: np.ndarray, tape) -> np.ndarray:
    ct, pt = tape
    return conv2d_backward(avg_pool2d_backward(dy, pt), ct)


def stem_forward(images: np.ndarray, spec: ConvSpec, params: LayerParams):
    """7x7 stride-2 conv, ReLU, 3x3 stride-2 max-pool."""
    check4(images, "images")
    if images.shape[2] < 4 or images.shape[3] < 4:
        raise ShapeError(f"stem needs at least 4x4 input, got {images.shape[2:]}")
    z, ct = conv2d_forward(images, spec, params)
    a, rt = relu_forward(z)
    y, mt = max_pool2d_forward(a, 3, 2)
    return y, (ct, rt, mt)


def stem_backward(dy: np.ndarray, tape) -> np.ndarray:
    ct, rt, mt = tape
    return conv2d_backward(relu_backward(max_pool2d_backward(dy, mt), rt), ct)


# ---------------------------------------------------------------------------
# miniature network
# ---------------------------------------------------------------------------


@dataclass
class MiniDenseNetConfig:
    input_size: int = 56
    in_channels: int = 3
    stem_channels: int = 16
    blocks: list = field(default_factory=lambda: [(4, 8), (4, 8)])
    compression: float = 0.5

    def __post_init__(self):
        self.blocks = [tuple(int(v) for v in b) for b in self.blocks]
        if not self.blocks:
            raise ValueError("at least one dense block is required")
        for L, g in self.blocks:
            if L < 1 or g < 1:
                raise ValueError(f"dense block needs L >= 1 and g >= 1, got {(L, g)}")
        if not 0.0 < self.compression <= 1.0:
            raise ValueError("compression must lie in (0, 1]")

    def shape_walk(self) -> list[tuple[str, int, int, int]]:
        """Stage-by-stage (name, channels, h, w); raises if a stage is impossible."""
        s = self.input_size
        if s < 4:
            raise ShapeError("input smaller than 4x4")
        s = -(-s // 2)  # stride-2 conv
        s = -(-s // 2)  # stride-2 max-pool
        c = self.stem_channels
        walk = [("stem", c, s, s)]
        for i, (L, g) in enumerate(self.blocks):
            c += L * g
            walk.append((f"block{i}", c, s, s))
            if i < len(self.blocks) - 1:
                if s % 2:
                    raise ShapeError(f"transition{i} would see odd spatial size {s}")
                c = max(1, int(self.compression * c))
                s //= 2
                walk.append((f"trans{i}", c, s, s))
        return walk


class MiniDenseNet(FeatureExtractor):
    """Stem -> (dense block -> transition)* -> dense block.

    Transitions sit between blocks only, so the default config maps a 56x56
    image to 56 feature maps of 7x7.
    """

    def __init__(self, config: MiniDenseNetConfig | None = None, seed: int = 0,
                 trainable: bool = False, dtype=DTYPE):
        self.config = config or MiniDenseNetConfig()
        self.trainable = trainable
        cfg = self.config
        walk = cfg.shape_walk()
        self._out = walk[-1][1:]
        rng = np.random.default_rng(seed)

        self.stem_spec = ConvSpec(cfg.in_channels, cfg.stem_channels, 7, 7, stride=2)
        self.stem_params = self.stem_spec.init_params(rng, dtype)
        self.blocks: list[list[tuple[ConvSpec, LayerParams]]] = []
        self.transitions: list[tuple[ConvSpec, LayerParams]] = []
        c = cfg.stem_channels
        for i, (L, g) in enumerate(cfg.blocks):
            layers = []
            for l in range(L):
                spec = ConvSpec(c + l * g, g, 3, 3)
                layers.append((spec, spec.init_params(rng, dtype)))
            self.blocks.append(layers)
            c += L * g
            if i < len(cfg.blocks) - 1:
                c_out = max(1, int(cfg.compression * c))
                spec = ConvSpec(c, c_out, 1, 1)
                self.transitions.append((spec, spec.init_params(rng, dtype)))
                c = c_out

    @property
    def output_shape(self):
        return self._out

    def named_params(self) -> dict[str, LayerParams]:
        out = {"backbone.stem": self.stem_params}
        for i, layers in enumerate(self.blocks):
            for l, (_, p) in enumerate(layers):
                out[f"backbone.block{i}.layer{l}"] = p
            if i < len(self.transitions):
                out[f"backbone.trans{i}"] = self.transitions[i][1]
        return out

    def forward(self, images: np.ndarray):
        check4(images, "images")
        cfg = self.config
        if images.shape[1:] != (cfg.in_channels, cfg.input_size, cfg.input_size):
            raise ShapeError(
                f"expected images (n, {cfg.in_channels}, {cfg.input_size}, {cfg.input_size}), "
                f"got {images.shape}"
            )
        x, st = stem_forward(images, self.stem_spec, self.stem_params)
        tapes = [st]
        for i, layers in enumerate(self.blocks):
            x, bt = dense_block_forward(x, layers)
            tapes.append(bt)
            if i < len(self.transitions):
                x, tt = transition_forward(x, *self.transitions[i])
                tapes.append(tt)
        return x, tapes

    def backward(self, dfeatures: np.ndarray, tapes) -> np.ndarray:
        d = dfeatures
        k = len(tapes) - 1
        for i in range(len(self.blocks) - 1, -1, -1):
            if i < len(self.transitions):
                d = transition_backward(d, tapes[k])
                k -= 1
            d = dense_block_backward(d, tapes[k])
            k -= 1
        return stem_backward(d, tapes[0])

    def extract(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        outs = [self.forward(images[i:i + batch_size])[0]
                for i in range(0, images.shape[0], batch_size)]
        return np.concatenate(outs, axis=0)
