"""Time the compiled and pure-numpy kernel backends on head-sized shapes.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from msse import kernels
from msse.head import MsseHead, MsseHeadConfig
from msse.layers import ConvSpec, conv2d_backward, conv2d_forward, max_pool2d_forward


def cases(rng):
    x = rng.normal(size=(64, 56, 7, 7)).astype(np.float32)
    dw = ConvSpec(56, 56, 5, 5, groups=56)
    dw_p = dw.init_params(rng)
    gen = ConvSpec(16, 8, 3, 3)
    gen_p = gen.init_params(rng)
    xg = rng.normal(size=(64, 16, 14, 14)).astype(np.float32)
    stem = rng.normal(size=(64, 16, 28, 28)).astype(np.float32)
    head = MsseHead(MsseHeadConfig(in_channels=56), seed=0)

    def dw_fb():
        y, t = conv2d_forward(x, dw, dw_p)
        conv2d_backward(y, t)

    def gen_fb():
        y, t = conv2d_forward(xg, gen, gen_p)
        conv2d_backward(y, t)

    def head_fb():
        logits, tape = head.forward(x, "train", np.random.default_rng(0))
        head.backward(np.ones_like(logits), tape)

    return {
        "depthwise 5x5 fwd+bwd (64x56x7x7)": dw_fb,
        "conv 3x3 fwd+bwd (64x16x14x14)": gen_fb,
        "maxpool 3x3/2 fwd (64x16x28x28)": lambda: max_pool2d_forward(stem, 3, 2),
        "MS-SSE head fwd+bwd, batch 64": head_fb,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    results = {}
    for b in backends:
        kernels.use_backend(b)
        for name, fn in cases(np.random.default_rng(0)).items():
            fn()  # warm-up
            results[(name, b)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    print(f"{'case':<40}" + "".join(f"{b:>12}" for b in backends) + "   speedup")
    for name in cases(np.random.default_rng(0)):
        row = [results[(name, b)] for b in backends]
        speed = f"{row[1] / row[0]:8.2f}x" if len(row) == 2 else ""
        print(f"{name:<40}" + "".join(f"{t * 1e3:10.2f}ms" for t in row) + "  " + speed)


if __name__ == "__main__":
    main()
