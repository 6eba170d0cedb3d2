"""Small neural building blocks on the tensor engine.

Linear, 1-d batch normalization with running statistics, and the
Linear -> BatchNorm -> Mish stacks the learnable aggregators use.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    KaimingNormal,
    ShapeError,
    Tensor,
    Zeros,
    mish,
    tile_rows,
)


class Linear:
    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        self.w = Tensor(KaimingNormal(d_in).sample(rng, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(Zeros().sample(rng, (1, d_out)), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.w
        if self.b is not None:
            out = out + tile_rows(self.b, x.shape[0])
        return out

    def parameters(self):
        return [self.w] if self.b is None else [self.w, self.b]


class BatchNorm1d:
    """Per-feature normalization over the batch dimension.

    Training mode normalizes by batch statistics (population variance) and
    updates running estimates with momentum 0.1; eval mode uses the running
    estimates as constants.
    """

    def __init__(self, d: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Tensor(np.ones((1, d)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, d)), requires_grad=True)
        self.running_mean = np.zeros((1, d))
        self.running_var = np.ones((1, d))
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        return batch_norm(x, self, self.training)

    def parameters(self):
        return [self.gamma, self.beta]


def batch_norm(x: Tensor, state: BatchNorm1d, training: bool) -> Tensor:
    """Normalize then affine, folded into out = x*scale + shift with [1, d]
    scale/shift so only two full-size passes touch the batch."""
    if x.ndim != 2:
        raise ShapeError(f"batch_norm needs a 2-d batch, got {x.shape}")
    m = x.shape[0]
    if m < 1:
        raise ShapeError("batch_norm over an empty batch")
    if training:
        mu = x.sum0() * (1.0 / m)
        ex2 = (x * x).sum0() * (1.0 / m)
        var = ex2 - mu * mu  # population variance; inputs are O(1) so this is safe
        state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mu.values
        state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * var.values
    else:
        mu = Tensor(state.running_mean)
        var = Tensor(state.running_var)
    scale = state.gamma * (var + state.eps) ** -0.5
    shift = state.beta - mu * scale
    return x * tile_rows(scale, m) + tile_rows(shift, m)


class Mlp:
    """Linear -> BatchNorm -> Mish per hidden transition; bare final Linear.

    widths gives every layer size including input and output, so
    widths=[1, 2, 2, 4] is three Linear layers with two normalized Mish
    transitions in between.
    """

    def __init__(self, widths: list[int], rng):
        if len(widths) < 2:
            raise ShapeError(f"an MLP needs at least two widths, got {widths}")
        self.widths = list(widths)
        self.linears = [Linear(widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)]
        self.norms = [BatchNorm1d(widths[i + 1]) for i in range(len(widths) - 2)]
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        for i, lin in enumerate(self.linears[:-1]):
            x = mish(batch_norm(lin(x), self.norms[i], self.training))
        return self.linears[-1](x)

    def train(self):
        self.training = True
        for bn in self.norms:
            bn.training = True

    def eval(self):
        self.training = False
        for bn in self.norms:
            bn.training = False

    def parameters(self):
        out = []
        for lin in self.linears:
            out.extend(lin.parameters())
        for bn in self.norms:
            out.extend(bn.parameters())
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, lin in enumerate(self.linears):
            out[f"lin{i}.w"] = lin.w
            if lin.b is not None:
                out[f"lin{i}.b"] = lin.b
        for i, bn in enumerate(self.norms):
            out[f"bn{i}.gamma"] = bn.gamma
            out[f"bn{i}.beta"] = bn.beta
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())
