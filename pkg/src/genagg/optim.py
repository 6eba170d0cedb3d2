"""Adam. The only optimizer the experiments use."""

from __future__ import annotations

import numpy as np

from .tensor import AutodiffError, Tensor


class Adam:
    """Adam with bias correction. step() consumes and clears gradients."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise AutodiffError(
                    f"adam step: parameter {i} (shape {p.values.shape}) has no gradient; "
                    "did backward() run over a graph containing it?"
                )
            g = p.grad
            m = self.m[i]
            v = self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None
