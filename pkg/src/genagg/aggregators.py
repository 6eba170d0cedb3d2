"""Multiset aggregation over segmented batches.

A SegmentedSet is the flat [m, d] value matrix of many variable-size sets
plus a sorted segment-id vector. aggregate_standard computes the thirteen
classic reductions directly in numpy (the ground truth everything else is
checked against); the *Aggregator classes are the differentiable handles the
GNN layers and experiments consume, all with the same
call(s) -> (out, aux_loss_or_None) shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .tensor import (
    EmptySegmentError,
    KaimingNormal,
    ShapeError,
    Tensor,
    clamp_min,
    concat_cols,
    exp,
    log,
    safe_denominator,
    segment_reduce,
    sqrt_guard,
    take_rows,
    tile_cols,
)


class StandardAggregator(str, Enum):
    MEAN = "mean"
    SUM = "sum"
    PRODUCT = "product"
    MIN_MAGNITUDE = "min_magnitude"
    MAX_MAGNITUDE = "max_magnitude"
    MIN = "min"
    MAX = "max"
    HARMONIC_MEAN = "harmonic_mean"
    GEOMETRIC_MEAN = "geometric_mean"
    ROOT_MEAN_SQUARE = "root_mean_square"
    EUCLIDEAN_NORM = "euclidean_norm"
    STANDARD_DEVIATION = "standard_deviation"
    LOG_SUM_EXP = "log_sum_exp"


@dataclass
class SegmentedSet:
    """m rows of d features split into n_segments contiguous sorted groups.

    Every segment id in [0, n_segments) must own at least one row; an
    aggregator has no meaningful output for an empty neighbourhood.
    """

    values: Tensor
    segment_ids: np.ndarray
    n_segments: int
    counts: np.ndarray = field(init=False)
    starts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.segment_ids = np.asarray(self.segment_ids, dtype=np.int64)
        if self.values.ndim != 2:
            raise ShapeError(f"SegmentedSet values must be 2-d, got {self.values.shape}")
        m = self.values.shape[0]
        if self.segment_ids.shape != (m,):
            raise ShapeError(
                f"segment_ids shape {self.segment_ids.shape} does not match {m} value rows"
            )
        if m == 0:
            raise EmptySegmentError("SegmentedSet with no rows")
        if self.n_segments < 1:
            raise ShapeError(f"n_segments must be positive, got {self.n_segments}")
        if self.segment_ids.min() < 0 or self.segment_ids.max() >= self.n_segments:
            raise ShapeError(f"segment id out of range [0, {self.n_segments})")
        if np.any(np.diff(self.segment_ids) < 0):
            raise ShapeError("segment_ids must be sorted ascending")
        self.counts = np.bincount(self.segment_ids, minlength=self.n_segments)
        empty = np.flatnonzero(self.counts == 0)
        if empty.size:
            raise EmptySegmentError(f"empty neighbourhood: segment {int(empty[0])} has no members")
        self.starts = np.concatenate(([0], np.cumsum(self.counts)[:-1]))

    @property
    def feature_dim(self) -> int:
        return self.values.shape[1]


def aggregate_standard(agg: StandardAggregator, s: SegmentedSet) -> Tensor:
    """Ground-truth reduction, computed directly in numpy (no graph).

    Magnitude conventions: product, min/max magnitude and the geometric mean
    reduce |x|; min/max/harmonic/LSE act on raw values. Reciprocal sums are
    floored away from zero like every division in the package.
    """
    v = s.values.values
    starts = s.starts
    counts = s.counts[:, None]
    a = StandardAggregator(agg)

    if a is StandardAggregator.MEAN:
        out = np.add.reduceat(v, starts, axis=0) / counts
    elif a is StandardAggregator.SUM:
        out = np.add.reduceat(v, starts, axis=0)
    elif a is StandardAggregator.PRODUCT:
        out = np.multiply.reduceat(np.abs(v), starts, axis=0)
    elif a is StandardAggregator.MIN_MAGNITUDE:
        out = np.minimum.reduceat(np.abs(v), starts, axis=0)
    elif a is StandardAggregator.MAX_MAGNITUDE:
        out = np.maximum.reduceat(np.abs(v), starts, axis=0)
    elif a is StandardAggregator.MIN:
        out = np.minimum.reduceat(v, starts, axis=0)
    elif a is StandardAggregator.MAX:
        out = np.maximum.reduceat(v, starts, axis=0)
    elif a is StandardAggregator.HARMONIC_MEAN:
        recip_sum = np.add.reduceat(1.0 / safe_denominator(v), starts, axis=0)
        out = counts / safe_denominator(recip_sum)
    elif a is StandardAggregator.GEOMETRIC_MEAN:
        out = np.multiply.reduceat(np.abs(v), starts, axis=0) ** (1.0 / counts)
    elif a is StandardAggregator.ROOT_MEAN_SQUARE:
        out = np.sqrt(np.add.reduceat(v * v, starts, axis=0) / counts)
    elif a is StandardAggregator.EUCLIDEAN_NORM:
        out = np.sqrt(np.add.reduceat(v * v, starts, axis=0))
    elif a is StandardAggregator.STANDARD_DEVIATION:
        mu = np.add.reduceat(v, starts, axis=0) / counts
        dev = v - mu[s.segment_ids]
        out = np.sqrt(np.add.reduceat(dev * dev, starts, axis=0) / counts)
    elif a is StandardAggregator.LOG_SUM_EXP:
        hi = np.maximum.reduceat(v, starts, axis=0)
        out = hi + np.log(np.add.reduceat(np.exp(v - hi[s.segment_ids]), starts, axis=0))
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown aggregator {agg!r}")
    return Tensor(out)


# differentiable baselines ---------------------------------------------------

DIAGNOSTICS = {"power_agg_p_clamped": 0}

POWER_P_FLOOR = 1e-3
POWER_X_FLOOR = 1e-7


def softmax_agg(s: SegmentedSet, temperature: Tensor) -> Tensor:
    """Softmax-weighted mean with learnable temperature.

    The per-segment max shift keeps exp in range and cancels exactly, so
    gradients through the unshifted weights are preserved.
    """
    v = s.values
    logits = v * temperature
    hi = np.maximum.reduceat(logits.values, s.starts, axis=0)  # constant shift
    w = exp(logits - Tensor(hi[s.segment_ids]))
    num = segment_reduce(v * w, s.segment_ids, s.n_segments, "sum")
    den = segment_reduce(w, s.segment_ids, s.n_segments, "sum")
    return num / den


def power_agg(s: SegmentedSet, p: Tensor) -> Tensor:
    """Power mean (mean of x^p, then 1/p root) over inputs clamped positive.

    |p| below 1e-3 is snapped to sign(p)*1e-3 (counted in DIAGNOSTICS, not an
    error) so the exponent stays away from the 0-pole. Each segment is
    evaluated relative to its largest (p>0) or smallest (p<0) member, an
    exact rewrite that keeps x^p in floating range for large |p|.
    """
    pv = float(p.values.reshape(()))
    if abs(pv) < POWER_P_FLOOR:
        DIAGNOSTICS["power_agg_p_clamped"] += 1
        snapped = POWER_P_FLOOR if pv >= 0.0 else -POWER_P_FLOOR
        p = Tensor(np.full_like(p.values, snapped))  # grad to p is dropped this call
        pv = snapped

    x = clamp_min(s.values, POWER_X_FLOOR)
    red = np.maximum.reduceat if pv > 0 else np.minimum.reduceat
    anchor = Tensor(red(x.values, s.starts, axis=0))  # detached
    ratio = x / take_rows(anchor, s.segment_ids)
    powed = exp(log(ratio) * p)
    mean_p = segment_reduce(powed, s.segment_ids, s.n_segments, "mean")
    return anchor * exp(log(mean_p) / p)


def pna_agg(s: SegmentedSet, proj: Tensor) -> Tensor:
    """Principal-neighbourhood blocks: (mean, std, min, max) under identity,
    n, and 1/n degree scalers, concatenated and projected back to d."""
    v = s.values
    ids, n = s.segment_ids, s.n_segments
    mu = segment_reduce(v, ids, n, "mean")
    dev = v - take_rows(mu, ids)
    var = segment_reduce(dev * dev, ids, n, "mean")
    std = sqrt_guard(var)
    blocks = [mu, std, segment_reduce(v, ids, n, "min"), segment_reduce(v, ids, n, "max")]
    d = s.feature_dim
    deg = Tensor(s.counts.astype(np.float64)[:, None])
    inv_deg = Tensor(1.0 / s.counts.astype(np.float64)[:, None])
    scaled = list(blocks)
    scaled += [b * tile_cols(deg, d) for b in blocks]
    scaled += [b * tile_cols(inv_deg, d) for b in blocks]
    return concat_cols(scaled) @ proj


class FixedAggregator:
    """Parameterless handle for one of mean/sum/max/min."""

    KINDS = ("mean", "sum", "max", "min")

    def __init__(self, kind: str):
        if kind not in self.KINDS:
            raise ValueError(f"fixed aggregator must be one of {self.KINDS}, got {kind!r}")
        self.kind = kind

    def __call__(self, s: SegmentedSet):
        return segment_reduce(s.values, s.segment_ids, s.n_segments, self.kind), None

    def parameters(self):
        return []

    def train(self):
        pass

    def eval(self):
        pass


class SoftmaxAggregator:
    """Temperature-weighted softmax mean; temperature starts at 1."""

    def __init__(self):
        self.temperature = Tensor(np.array([1.0]), requires_grad=True)

    def __call__(self, s: SegmentedSet):
        return softmax_agg(s, self.temperature), None

    def parameters(self):
        return [self.temperature]

    def train(self):
        pass

    def eval(self):
        pass


class PowerAggregator:
    """Learnable power mean; p starts at 1 (arithmetic mean of clamped x)."""

    def __init__(self):
        self.p = Tensor(np.array([1.0]), requires_grad=True)

    def __call__(self, s: SegmentedSet):
        return power_agg(s, self.p), None

    def parameters(self):
        return [self.p]

    def train(self):
        pass

    def eval(self):
        pass


class PnaAggregator:
    """Twelve scaled moment blocks with a learnable [12d, d] projection."""

    def __init__(self, d: int, rng):
        self.d = d
        self.proj = Tensor(KaimingNormal(12 * d).sample(rng, (12 * d, d)), requires_grad=True)

    def __call__(self, s: SegmentedSet):
        if s.feature_dim != self.d:
            raise ShapeError(f"pna projection built for d={self.d}, got d={s.feature_dim}")
        return pna_agg(s, self.proj), None

    def parameters(self):
        return [self.proj]

    def train(self):
        pass

    def eval(self):
        pass
