"""Adam with bias correction."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..layers import LayerParams, Param


def adam_step(params: LayerParams | Iterable[Param], t: int, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam update at step ``t`` (1-based). Gradients are left as is."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    entries = [p for _, p in params.items()] if isinstance(params, LayerParams) else list(params)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in entries:
        dt = p.value.dtype.type
        g = p.grad
        p.m *= dt(beta1)
        p.m += dt(1.0 - beta1) * g
        p.v *= dt(beta2)
        p.v += dt(1.0 - beta2) * (g * g)
        m_hat = p.m / dt(c1)
        v_hat = p.v / dt(c2)
        p.value -= dt(lr) * m_hat / (np.sqrt(v_hat) + dt(eps))


class Adam:
    """Holds the step counter and hyper-parameters for a set of parameters."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0

    def step(self, named: dict[str, LayerParams]) -> None:
        self.step_count += 1
        if self.lr == 0.0:
            return
        for lp in named.values():
            adam_step(lp, self.step_count, self.lr, self.beta1, self.beta2, self.eps)
