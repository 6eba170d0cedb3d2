"""The augmented f-mean: out = f_inv(n^(alpha-1) * sum_i f(x_i - beta*mu)).

alpha relaxes idempotency (alpha=0 recovers the classic f-mean, alpha=1 the
plain f-sum), beta subtracts a fraction of the segment mean so centralised
moments are expressible. With the right closed-form f this family reproduces
each of the thirteen standard aggregators; with a small invertible MLP pair
(f, f_inv) and learnable alpha/beta it becomes a trainable aggregator.

Closed forms are SymbolicF instances; min/max style aggregators are exact
limits of the family and are dispatched directly (LimitCase). The learnable
version is GenAgg, which also carries the inverse-consistency penalty
E[(|f_inv(f(x))| - |x|)^2] used as an auxiliary loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .aggregators import SegmentedSet, StandardAggregator
from .nn import Mlp
from .tensor import (
    Tensor,
    absval,
    concat_rows,
    exp,
    log,
    reshape,
    rng_stream,
    segment_reduce,
    sqrt_guard,
    take_rows,
    tile_cols,
    transpose,
)


class NonFiniteError(ArithmeticError):
    """An aggregation produced inf/nan; message names the f and stage."""


class CheckpointError(ValueError):
    """Unusable checkpoint document: wrong version, missing or misshapen arrays."""


# closed-form f catalog -------------------------------------------------------


class SymbolicF:
    """Invertible scalar map applied elementwise. magnitude_only marks maps
    that discard sign, in which case f_inv(f(x)) reconstructs |x|."""

    name: str = "?"
    magnitude_only: bool = False

    def eval(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def inverse(self, y: Tensor) -> Tensor:
        raise NotImplementedError

    def __repr__(self):
        return self.name


class Identity(SymbolicF):
    name = "identity"

    def eval(self, x):
        return x

    def inverse(self, y):
        return y


class LogAbs(SymbolicF):
    name = "log_abs"
    magnitude_only = True

    def eval(self, x):
        return log(x)  # log is log|.| with the 1e-12 floor

    def inverse(self, y):
        return exp(y)


class Reciprocal(SymbolicF):
    name = "reciprocal"

    def eval(self, x):
        return 1.0 / x

    def inverse(self, y):
        return 1.0 / y


class Square(SymbolicF):
    name = "square"
    magnitude_only = True

    def eval(self, x):
        return x * x

    def inverse(self, y):
        return sqrt_guard(y)


class Exp(SymbolicF):
    name = "exp"

    def eval(self, x):
        return exp(x)

    def inverse(self, y):
        return log(y)


@dataclass(frozen=True)
class PowAbs(SymbolicF):
    """|x|^p. Large |p| approaches max (p>0) or min (p<0) magnitude."""

    p: float
    magnitude_only = True

    @property
    def name(self):
        return f"pow_abs({self.p:g})"

    def eval(self, x):
        return exp(log(x) * self.p)

    def inverse(self, y):
        return exp(log(y) * (1.0 / self.p))


@dataclass(frozen=True)
class ExpScaled(SymbolicF):
    """exp(p*x). Large |p| approaches max (p>0) or min (p<0)."""

    p: float

    @property
    def name(self):
        return f"exp_scaled({self.p:g})"

    def eval(self, x):
        return exp(x * self.p)

    def inverse(self, y):
        return log(y) * (1.0 / self.p)


class LimitCase(Enum):
    """Aggregators realised as p -> inf limits; evaluated exactly."""

    MIN = "min"
    MAX = "max"
    MIN_MAGNITUDE = "min_magnitude"
    MAX_MAGNITUDE = "max_magnitude"


@dataclass
class MlpPair:
    """Learnable f: R -> R^k and f_inv: R^k -> R."""

    f_net: Mlp
    finv_net: Mlp

    @property
    def latent_dim(self) -> int:
        return self.f_net.widths[-1]

    def train(self):
        self.f_net.train()
        self.finv_net.train()

    def eval(self):
        self.f_net.eval()
        self.finv_net.eval()

    def parameters(self):
        return self.f_net.parameters() + self.finv_net.parameters()


@dataclass
class AfmParams:
    """f plus the two augmentation knobs. alpha/beta are floats on the
    symbolic path and 1-element tensors on the learnable path."""

    f: SymbolicF | LimitCase | MlpPair
    alpha: float | Tensor = 0.0
    beta: float | Tensor = 0.0


def symbolic_params_for(agg: StandardAggregator) -> AfmParams:
    """The closed-form <f, alpha, beta> realising each standard aggregator."""
    a = StandardAggregator(agg)
    table: dict[StandardAggregator, AfmParams] = {
        StandardAggregator.MEAN: AfmParams(Identity(), 0.0, 0.0),
        StandardAggregator.SUM: AfmParams(Identity(), 1.0, 0.0),
        StandardAggregator.PRODUCT: AfmParams(LogAbs(), 1.0, 0.0),
        StandardAggregator.MIN_MAGNITUDE: AfmParams(LimitCase.MIN_MAGNITUDE, 0.0, 0.0),
        StandardAggregator.MAX_MAGNITUDE: AfmParams(LimitCase.MAX_MAGNITUDE, 0.0, 0.0),
        StandardAggregator.MIN: AfmParams(LimitCase.MIN, 0.0, 0.0),
        StandardAggregator.MAX: AfmParams(LimitCase.MAX, 0.0, 0.0),
        StandardAggregator.HARMONIC_MEAN: AfmParams(Reciprocal(), 0.0, 0.0),
        StandardAggregator.GEOMETRIC_MEAN: AfmParams(LogAbs(), 0.0, 0.0),
        StandardAggregator.ROOT_MEAN_SQUARE: AfmParams(Square(), 0.0, 0.0),
        StandardAggregator.EUCLIDEAN_NORM: AfmParams(Square(), 1.0, 0.0),
        StandardAggregator.STANDARD_DEVIATION: AfmParams(Square(), 0.0, 1.0),
        StandardAggregator.LOG_SUM_EXP: AfmParams(Exp(), 1.0, 0.0),
    }
    return table[a]


def _beta_shift(v: Tensor, s: SegmentedSet, beta) -> Tensor:
    mu = segment_reduce(v, s.segment_ids, s.n_segments, "mean")
    return v - take_rows(mu, s.segment_ids) * beta


def _scale_counts(tot: Tensor, s: SegmentedSet, alpha: float) -> Tensor:
    # n^(alpha-1) per segment; alpha is a plain float here
    if alpha == 1.0:
        return tot
    scale = s.counts.astype(np.float64)[:, None] ** (alpha - 1.0)
    return tot * tile_cols(Tensor(scale), s.feature_dim)


def _check_finite(out: Tensor, tag: str) -> Tensor:
    if not np.all(np.isfinite(out.values)):
        raise NonFiniteError(f"aggregation produced non-finite values ({tag})")
    return out


def afm_forward(params: AfmParams, s: SegmentedSet) -> Tensor:
    """Apply the augmented f-mean to every segment, [S, d] out.

    PowAbs/ExpScaled are evaluated anchored to each segment's extremum (an
    exact rewrite) so that large |p| stays in floating range. LimitCase
    members skip f entirely.
    """
    f = params.f
    if isinstance(f, MlpPair):
        return _afm_forward_mlp(params, s)[0]
    if isinstance(f, LimitCase):
        if f is LimitCase.MIN:
            out = segment_reduce(s.values, s.segment_ids, s.n_segments, "min")
        elif f is LimitCase.MAX:
            out = segment_reduce(s.values, s.segment_ids, s.n_segments, "max")
        elif f is LimitCase.MIN_MAGNITUDE:
            out = segment_reduce(absval(s.values), s.segment_ids, s.n_segments, "min")
        else:
            out = segment_reduce(absval(s.values), s.segment_ids, s.n_segments, "max")
        return _check_finite(out, f.value)

    alpha = float(params.alpha)
    beta = float(params.beta)
    v = s.values if beta == 0.0 else _beta_shift(s.values, s, beta)

    if isinstance(f, PowAbs):
        mag = absval(v)
        red = np.maximum.reduceat if f.p > 0 else np.minimum.reduceat
        anchor = Tensor(red(mag.values, s.starts, axis=0))
        ratio = mag / take_rows(anchor, s.segment_ids)
        tot = segment_reduce(exp(log(ratio) * f.p), s.segment_ids, s.n_segments, "sum")
        tot = _scale_counts(tot, s, alpha)
        out = anchor * exp(log(tot) * (1.0 / f.p))
    elif isinstance(f, ExpScaled):
        red = np.maximum.reduceat if f.p > 0 else np.minimum.reduceat
        anchor = Tensor(red(v.values, s.starts, axis=0))
        shifted = v - take_rows(anchor, s.segment_ids)
        tot = segment_reduce(exp(shifted * f.p), s.segment_ids, s.n_segments, "sum")
        tot = _scale_counts(tot, s, alpha)
        out = anchor + log(tot) * (1.0 / f.p)
    else:
        tot = segment_reduce(f.eval(v), s.segment_ids, s.n_segments, "sum")
        tot = _scale_counts(tot, s, alpha)
        out = f.inverse(tot)
    return _check_finite(out, getattr(f, "name", str(f)))


def _afm_forward_mlp(params: AfmParams, s: SegmentedSet, probes=None) -> tuple[Tensor, Tensor]:
    """Learnable path: features are folded into the batch axis so a single
    scalar-to-latent f net serves every feature channel.

    f runs once over the flattened inputs (plus optional probe rows, routed
    to a dustbin segment that is dropped before f_inv); those same f
    activations feed both the aggregation and the inverse-consistency loss,
    so every training step sees one coherent batch statistic per net.
    Returns (aggregated [S, d], inverse-consistency loss).
    """
    pair: MlpPair = params.f
    alpha, beta = params.alpha, params.beta
    m, d = s.values.shape
    n = s.n_segments

    v = _beta_shift(s.values, s, beta)
    col = reshape(transpose(v), (m * d, 1))  # feature-major flatten
    # expanded segment ids stay sorted: feature block j owns ids j*n .. j*n+n-1
    ids2 = np.repeat(np.arange(d), m) * n + np.tile(s.segment_ids, d)

    if probes is not None:
        col = concat_rows([col, Tensor(np.asarray(probes, dtype=np.float64).reshape(-1, 1))])
        ids2 = np.concatenate([ids2, np.full(col.shape[0] - m * d, n * d, dtype=np.int64)])
        n_groups = n * d + 1
    else:
        n_groups = n * d

    fx = pair.f_net(col)
    tot = segment_reduce(fx, ids2, n_groups, "sum")
    if probes is not None:
        tot = take_rows(tot, np.arange(n * d))  # drop the probe dustbin

    ln_counts = Tensor(np.log(np.tile(s.counts.astype(np.float64), d))[:, None])
    scale = exp(ln_counts * (alpha - 1.0))  # n^(alpha-1), differentiable in alpha
    tot = tot * tile_cols(scale, pair.latent_dim)

    # f_inv also runs once, over the aggregated totals and the per-row f
    # activations together, so its batch statistics cover both input roles
    y = pair.finv_net(concat_rows([tot, fx]))
    out = transpose(reshape(take_rows(y, np.arange(n * d)), (d, n)))

    # inverse consistency over the very activations used above; the |x|
    # target is the shifted input, so its gradient also reaches beta
    recon = take_rows(y, np.arange(n * d, n * d + col.shape[0]))
    diff = absval(recon) - absval(col)
    aux = (diff * diff).mean()
    return _check_finite(out, "mlp_pair"), aux


def inv_loss(pair: MlpPair, x: Tensor) -> Tensor:
    """E[(|f_inv(f(x))| - |x|)^2]: inverse consistency up to sign."""
    y = pair.finv_net(pair.f_net(x))
    diff = absval(y) - absval(x)
    return (diff * diff).mean()


# learnable aggregator ---------------------------------------------------------


class GenAgg:
    """Augmented f-mean with MLP f/f_inv and learnable alpha, beta.

    Calling returns (aggregated [S, d], aux) where aux is the inverse
    consistency loss over this batch's inputs; in training mode the aux batch
    is padded with an equal number of fresh N(0,1) probes so f stays
    invertible beyond the data's reach.
    """

    F_WIDTHS = (1, 2, 2, 4)
    FINV_WIDTHS = (4, 2, 2, 1)

    def __init__(self, seed: int = 0, alpha: float = 0.0, beta: float = 0.0):
        self.pair = MlpPair(
            Mlp(list(self.F_WIDTHS), rng_stream(seed, "genagg", "f")),
            Mlp(list(self.FINV_WIDTHS), rng_stream(seed, "genagg", "finv")),
        )
        self.alpha = Tensor(np.array([alpha]), requires_grad=True)
        self.beta = Tensor(np.array([beta]), requires_grad=True)
        self.training = True
        self._probe_rng = rng_stream(seed, "genagg", "probes")

    def __call__(self, s: SegmentedSet):
        probes = None
        if self.training:
            probes = self._probe_rng.standard_normal((s.values.size, 1))
        return _afm_forward_mlp(AfmParams(self.pair, self.alpha, self.beta), s, probes)

    def inv_probe_loss(self, n_probes: int, rng) -> float:
        """Inverse consistency on fresh N(0,1) probes, eval mode, no graph."""
        was_training = self.training
        self.eval()
        x = Tensor(rng.standard_normal((n_probes, 1)))
        loss = inv_loss(self.pair, x).item()
        if was_training:
            self.train()
        return loss

    def parameters(self):
        return self.pair.parameters() + [self.alpha, self.beta]

    def train(self):
        self.training = True
        self.pair.train()

    def eval(self):
        self.training = False
        self.pair.eval()

    # persistence ---------------------------------------------------------

    def state_dict(self) -> dict:
        def net_state(net: Mlp) -> dict:
            arrays = {k: v.values.tolist() for k, v in net.named_parameters().items()}
            for i, bn in enumerate(net.norms):
                arrays[f"bn{i}.running_mean"] = bn.running_mean.tolist()
                arrays[f"bn{i}.running_var"] = bn.running_var.tolist()
            return {"widths": net.widths, "arrays": arrays}

        return {
            "format_version": 1,
            "alpha": float(self.alpha.values.reshape(())),
            "beta": float(self.beta.values.reshape(())),
            "f_net": net_state(self.pair.f_net),
            "finv_net": net_state(self.pair.finv_net),
        }

    def load_state_dict(self, doc: dict):
        if doc.get("format_version") != 1:
            raise CheckpointError(f"unsupported checkpoint version: {doc.get('format_version')!r}")

        def load_net(net: Mlp, state: dict, label: str):
            if list(state.get("widths", [])) != net.widths:
                raise CheckpointError(
                    f"{label}: widths {state.get('widths')} do not match model {net.widths}"
                )
            arrays = state["arrays"]
            named = net.named_parameters()
            for key, tensor in named.items():
                if key not in arrays:
                    raise CheckpointError(f"{label}: missing array {key!r}")
                arr = np.asarray(arrays[key], dtype=np.float64)
                if arr.shape != tensor.values.shape:
                    raise CheckpointError(
                        f"{label}: array {key!r} has shape {arr.shape}, expected {tensor.values.shape}"
                    )
                tensor.values = arr
            for i, bn in enumerate(net.norms):
                for stat in ("running_mean", "running_var"):
                    key = f"bn{i}.{stat}"
                    if key not in arrays:
                        raise CheckpointError(f"{label}: missing array {key!r}")
                    arr = np.asarray(arrays[key], dtype=np.float64)
                    if arr.shape != getattr(bn, stat).shape:
                        raise CheckpointError(f"{label}: array {key!r} has wrong shape {arr.shape}")
                    setattr(bn, stat, arr)

        try:
            load_net(self.pair.f_net, doc["f_net"], "f_net")
            load_net(self.pair.finv_net, doc["finv_net"], "finv_net")
            self.alpha.values = np.array([float(doc["alpha"])])
            self.beta.values = np.array([float(doc["beta"])])
        except KeyError as exc:
            raise CheckpointError(f"checkpoint missing field {exc}") from exc

    def save(self, path, config_hash: str | None = None):
        doc = self.state_dict()
        doc["config_hash"] = config_hash
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path, expect_config_hash: str | None = None) -> "GenAgg":
        with open(path) as fh:
            doc = json.load(fh)
        if expect_config_hash is not None and doc.get("config_hash") != expect_config_hash:
            raise CheckpointError(
                f"checkpoint config hash {doc.get('config_hash')!r} != expected {expect_config_hash!r}"
            )
        model = cls()
        model.load_state_dict(doc)
        return model
