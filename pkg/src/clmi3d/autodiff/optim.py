from __future__ import annotations

import numpy as np

from ..errors import MissingGrad
from .tensor import Parameter


class Adam:
    """Bias-corrected Adam. Moment buffers live on each Parameter."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Parameter] = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self) -> None:
        missing = [p.name for p in self.params if p.grad is None]
        if missing:
            raise MissingGrad(f"no gradient for parameter(s): {', '.join(map(str, missing))}")
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = p.grad
            p.step_count += 1
            t = p.step_count
            p.adam_m *= b1
            p.adam_m += (1 - b1) * g
            p.adam_v *= b2
            p.adam_v += (1 - b2) * g * g
            m_hat = p.adam_m / (1 - b1**t)
            v_hat = p.adam_v / (1 - b2**t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    Adam(params, lr, beta1, beta2, eps).step()
