"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation is a vectorised numpy kernel that records its parents and a
closure mapping the output gradient to parent gradients; backward() runs a
topological sweep over that graph. Only what the aggregation experiments
need is here: elementwise math, matmul, segment reductions over sorted ids,
and explicit shape plumbing (tile/take/concat/reshape). Broadcasting is
restricted to equal shapes or a size-1 operand; everything else must go
through an explicit op so gradients stay easy to audit.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

EPS_LOG = 1e-12
EPS_DIV = 1e-12

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class EmptySegmentError(ValueError):
    """A segment reduction met a segment id with no rows."""


class AutodiffError(RuntimeError):
    """Backward-pass misuse: non-scalar loss, missing grad, bad graph."""


class no_grad:
    """Context manager that disables graph recording (eval-time fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff.

    `grad` accumulates across backward() calls until reset; `_bw` is a
    closure returning (parent, parent_grad) pairs for the flow sweep.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_bw", "_op")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bw = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, exponent):
        return powc(self, exponent)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # elementwise / reductions ---------------------------------------------

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return absval(self)

    def tanh(self):
        return tanh(self)

    def mish(self):
        return mish(self)

    def clamp_min(self, floor: float):
        return clamp_min(self, floor)

    def sum(self):
        return total(self)

    def sum0(self):
        return sum_rows(self)

    def mean(self):
        return total(self) * (1.0 / self.values.size)

    def transpose(self):
        return transpose(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values: np.ndarray, parents, bw, op: str) -> Tensor:
    out = Tensor(values)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
        out._op = op
    else:
        out._op = op
    return out


def _check_binary(op: str, a: Tensor, b: Tensor):
    if a.values.shape == b.values.shape:
        return
    if a.values.size == 1 or b.values.size == 1:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.values.shape} and {b.values.shape}")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    # collapse a broadcast gradient back onto a size-1 operand
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def safe_denominator(d: np.ndarray) -> np.ndarray:
    """sign(d) * max(|d|, eps), with sign(0) taken as +1 so the floor is never 0."""
    return np.where(d < 0.0, np.minimum(d, -EPS_DIV), np.maximum(d, EPS_DIV))


# binary ops ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_binary("add", a, b)

    def bw(g):
        return ((a, _reduce_to(g, a.values.shape)), (b, _reduce_to(g, b.values.shape)))

    return _result(a.values + b.values, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_binary("sub", a, b)

    def bw(g):
        return ((a, _reduce_to(g, a.values.shape)), (b, _reduce_to(-g, b.values.shape)))

    return _result(a.values - b.values, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_binary("mul", a, b)
    av, bv = a.values, b.values

    def bw(g):
        return ((a, _reduce_to(g * bv, a.values.shape)), (b, _reduce_to(g * av, b.values.shape)))

    return _result(av * bv, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    """a / b with the denominator floored away from zero."""
    a, b = _lift(a), _lift(b)
    _check_binary("div", a, b)
    av = a.values
    den = safe_denominator(b.values)
    live = np.abs(b.values) > EPS_DIV  # floored denominators get zero grad

    def bw(g):
        ga = _reduce_to(g / den, a.values.shape)
        gb = _reduce_to(np.where(live, -g * av / (den * den), 0.0), b.values.shape)
        return ((a, ga), (b, gb))

    return _result(av / den, (a, b), bw, "div")


def powc(a, exponent: float) -> Tensor:
    """a ** k for a constant float k. Caller owns domain safety."""
    a = _lift(a)
    k = float(exponent)
    av = a.values

    def bw(g):
        return ((a, g * k * av ** (k - 1.0)),)

    return _result(av**k, (a,), bw, "powc")


def neg(a) -> Tensor:
    a = _lift(a)

    def bw(g):
        return ((a, -g),)

    return _result(-a.values, (a,), bw, "neg")


# unary ops ---------------------------------------------------------------


def exp(a) -> Tensor:
    a = _lift(a)
    out_vals = np.exp(a.values)

    def bw(g):
        return ((a, g * out_vals),)

    return _result(out_vals, (a,), bw, "exp")


def log(a) -> Tensor:
    """log(max(|a|, eps)): the log-of-magnitude used throughout, floored."""
    a = _lift(a)
    av = a.values
    mag = np.abs(av)
    live = mag > EPS_LOG

    def bw(g):
        # d log|x| / dx = 1/x; zero inside the floor
        return ((a, np.where(live, g / np.where(live, av, 1.0), 0.0)),)

    return _result(np.log(np.maximum(mag, EPS_LOG)), (a,), bw, "log")


def absval(a) -> Tensor:
    a = _lift(a)
    av = a.values

    def bw(g):
        return ((a, g * np.sign(av)),)

    return _result(np.abs(av), (a,), bw, "abs")


def tanh(a) -> Tensor:
    a = _lift(a)
    out_vals = np.tanh(a.values)

    def bw(g):
        return ((a, g * (1.0 - out_vals * out_vals)),)

    return _result(out_vals, (a,), bw, "tanh")


def mish(a) -> Tensor:
    """x * tanh(softplus(x)), fused as one primitive with a stable softplus."""
    a = _lift(a)
    av = a.values
    sp = np.logaddexp(0.0, av)
    t = np.tanh(sp)
    sig = 1.0 - np.exp(-sp)  # sigmoid(x), reusing softplus: e^-sp = 1 - sigmoid

    def bw(g):
        return ((a, g * (t + av * (1.0 - t * t) * sig)),)

    return _result(av * t, (a,), bw, "mish")


def clamp_min(a, floor: float) -> Tensor:
    a = _lift(a)
    c = float(floor)
    av = a.values
    live = av > c

    def bw(g):
        return ((a, np.where(live, g, 0.0)),)

    return _result(np.maximum(av, c), (a,), bw, "clamp_min")


def sqrt_guard(a, grad_floor: float = 1e-12) -> Tensor:
    """sqrt(max(a, 0)) with zero gradient where a <= grad_floor.

    The subgradient-0 convention at the kink matches sign(0)=0 for |x|.
    """
    a = _lift(a)
    av = np.maximum(a.values, 0.0)
    out_vals = np.sqrt(av)
    live = av > grad_floor

    def bw(g):
        return ((a, np.where(live, 0.5 * g / np.where(live, out_vals, 1.0), 0.0)),)

    return _result(out_vals, (a,), bw, "sqrt_guard")


# linear algebra / reductions ----------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.values.shape} and {b.values.shape}")
    if a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(f"matmul: inner dims {a.values.shape} @ {b.values.shape}")
    av, bv = a.values, b.values

    def bw(g):
        return ((a, g @ bv.T), (b, av.T @ g))

    return _result(av @ bv, (a, b), bw, "matmul")


def total(a) -> Tensor:
    """Sum of all entries, as a 0-d tensor."""
    a = _lift(a)
    shape = a.values.shape

    def bw(g):
        return ((a, np.full(shape, float(g))),)

    return _result(np.asarray(np.sum(a.values)), (a,), bw, "total")


def sum_rows(a) -> Tensor:
    """Column sums of a 2-d tensor, shape [1, d]."""
    a = _lift(a)
    if a.values.ndim != 2:
        raise ShapeError(f"sum_rows needs a 2-d tensor, got {a.values.shape}")
    m = a.values.shape[0]

    def bw(g):
        return ((a, np.broadcast_to(g, (m, g.shape[1])).copy()),)

    return _result(a.values.sum(axis=0, keepdims=True), (a,), bw, "sum_rows")


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.values.ndim != 2:
        raise ShapeError(f"transpose needs a 2-d tensor, got {a.values.shape}")

    def bw(g):
        return ((a, np.ascontiguousarray(g.T)),)

    return _result(np.ascontiguousarray(a.values.T), (a,), bw, "transpose")


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    orig = a.values.shape
    out_vals = np.reshape(a.values, shape)

    def bw(g):
        return ((a, np.reshape(g, orig)),)

    return _result(out_vals, (a,), bw, "reshape")


def tile_rows(a, m: int) -> Tensor:
    """Repeat a [1, d] (or [d]) row m times -> [m, d]. The forward value is a
    read-only broadcast view; no op in this module mutates operand values."""
    a = _lift(a)
    row = a.values.reshape(1, -1)
    out_vals = np.broadcast_to(row, (m, row.shape[1]))

    def bw(g):
        return ((a, g.sum(axis=0).reshape(a.values.shape)),)

    return _result(out_vals, (a,), bw, "tile_rows")


def tile_cols(a, d: int) -> Tensor:
    """Repeat a [m, 1] (or [m]) column d times -> [m, d]."""
    a = _lift(a)
    col = a.values.reshape(-1, 1)
    out_vals = np.broadcast_to(col, (col.shape[0], d))

    def bw(g):
        return ((a, g.sum(axis=1).reshape(a.values.shape)),)

    return _result(out_vals, (a,), bw, "tile_cols")


def take_rows(a, idx) -> Tensor:
    """Row gather: out[k] = a[idx[k]]. Backward scatter-adds."""
    a = _lift(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.values.ndim != 2:
        raise ShapeError(f"take_rows needs a 2-d tensor, got {a.values.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.values.shape[0]):
        raise ShapeError(f"take_rows: index out of range for {a.values.shape[0]} rows")
    shape = a.values.shape

    def bw(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return ((a, z),)

    return _result(a.values[idx], (a,), bw, "take_rows")


def concat_cols(parts) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols of nothing")
    rows = parts[0].values.shape[0]
    for p in parts:
        if p.values.ndim != 2 or p.values.shape[0] != rows:
            raise ShapeError("concat_cols: all parts must be 2-d with equal row counts")
    widths = [p.values.shape[1] for p in parts]
    offsets = np.concatenate(([0], np.cumsum(widths)))

    def bw(g):
        return tuple((p, g[:, offsets[i] : offsets[i + 1]]) for i, p in enumerate(parts))

    return _result(np.concatenate([p.values for p in parts], axis=1), tuple(parts), bw, "concat_cols")


def concat_rows(parts) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows of nothing")
    cols = parts[0].values.shape[1] if parts[0].values.ndim == 2 else None
    for p in parts:
        if p.values.ndim != 2 or p.values.shape[1] != cols:
            raise ShapeError("concat_rows: all parts must be 2-d with equal column counts")
    heights = [p.values.shape[0] for p in parts]
    offsets = np.concatenate(([0], np.cumsum(heights)))

    def bw(g):
        return tuple((p, g[offsets[i] : offsets[i + 1]]) for i, p in enumerate(parts))

    return _result(np.concatenate([p.values for p in parts], axis=0), tuple(parts), bw, "concat_rows")


# segment reductions --------------------------------------------------------


def _segment_layout(segment_ids: np.ndarray, n_segments: int, m: int):
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] != m:
        raise ShapeError(f"segment_ids must be 1-d of length {m}, got shape {ids.shape}")
    if ids.size == 0:
        raise EmptySegmentError("segment reduction over an empty batch")
    if ids.min() < 0 or ids.max() >= n_segments:
        raise ShapeError(f"segment id out of range [0, {n_segments})")
    if np.any(np.diff(ids) < 0):
        raise ShapeError("segment_ids must be sorted ascending")
    counts = np.bincount(ids, minlength=n_segments)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptySegmentError(f"empty neighbourhood: segment {int(empty[0])} has no members")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return ids, counts, starts


def segment_reduce(a, segment_ids, n_segments: int, kind: str) -> Tensor:
    """Reduce [m, d] rows into [n_segments, d] by sorted segment id.

    kind in {"sum", "mean", "max", "min"}. max/min route gradient to the
    first occurrence of the extremum within each segment.
    """
    a = _lift(a)
    if a.values.ndim != 2:
        raise ShapeError(f"segment_reduce needs 2-d values, got {a.values.shape}")
    m, d = a.values.shape
    ids, counts, starts = _segment_layout(segment_ids, n_segments, m)
    v = a.values

    if kind == "sum":
        out_vals = np.add.reduceat(v, starts, axis=0)

        def bw(g):
            return ((a, g[ids]),)

    elif kind == "mean":
        out_vals = np.add.reduceat(v, starts, axis=0) / counts[:, None]

        def bw(g):
            return ((a, (g / counts[:, None])[ids]),)

    elif kind in ("max", "min"):
        ufunc = np.maximum if kind == "max" else np.minimum
        out_vals = ufunc.reduceat(v, starts, axis=0)
        hit = v == out_vals[ids]
        cand = np.where(hit, np.arange(m)[:, None], m)
        first = np.minimum.reduceat(cand, starts, axis=0)  # [S, d] row index per column
        cols = np.broadcast_to(np.arange(d), (n_segments, d))

        def bw(g):
            z = np.zeros((m, d))
            np.add.at(z, (first.ravel(), cols.ravel()), g.ravel())
            return ((a, z),)

    else:
        raise ValueError(f"unknown segment reduction kind: {kind!r}")

    return _result(out_vals, (a,), bw, f"segment_{kind}")


def segment_sum(a, ids, n: int) -> Tensor:
    return segment_reduce(a, ids, n, "sum")


def segment_mean(a, ids, n: int) -> Tensor:
    return segment_reduce(a, ids, n, "mean")


def segment_max(a, ids, n: int) -> Tensor:
    return segment_reduce(a, ids, n, "max")


def segment_min(a, ids, n: int) -> Tensor:
    return segment_reduce(a, ids, n, "min")


_ELEMENTWISE_UNARY = {
    "exp": exp,
    "log": log,
    "abs": absval,
    "tanh": tanh,
    "mish": mish,
    "neg": neg,
}
_ELEMENTWISE_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": powc}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Name-dispatched elementwise op; the registry the grad checker walks."""
    if kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ValueError(f"{kind} is unary")
        return _ELEMENTWISE_UNARY[kind](a)
    if kind in _ELEMENTWISE_BINARY:
        if b is None:
            raise ValueError(f"{kind} is binary")
        return _ELEMENTWISE_BINARY[kind](a, b)
    raise ValueError(f"unknown elementwise op: {kind!r}")


# backward sweep ------------------------------------------------------------


def backward(loss: Tensor):
    """Reverse-mode sweep from a scalar loss.

    Flow gradients live in a local dict keyed by node id; each node's total
    is added into .grad, so repeated backward calls accumulate (calling twice
    doubles leaf grads on a linear graph).
    """
    if loss.values.size != 1:
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    flow = {id(loss): np.ones_like(loss.values)}
    for node in reversed(topo):
        g = flow.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._bw is None:
            continue
        for parent, pg in node._bw(g):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in flow:
                flow[key] = flow[key] + pg
            else:
                flow[key] = pg


# gradient checking ----------------------------------------------------------


def finite_diff_check(fn, point: Tensor, eps: float = 1e-5) -> float:
    """Max relative error |analytic - central difference| / max(1, |analytic|).

    fn maps a tensor to a scalar tensor; point supplies the evaluation
    coordinates (its requires_grad flag is ignored).
    """
    p = Tensor(np.array(point.values, dtype=np.float64), requires_grad=True)
    out = fn(p)
    if out.values.size != 1:
        raise AutodiffError("finite_diff_check needs fn to return a scalar")
    backward(out)
    analytic = p.grad if p.grad is not None else np.zeros_like(p.values)

    flat = p.values.reshape(-1)
    fd = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            hi = fn(Tensor(p.values)).item()
            flat[i] = saved - eps
            lo = fn(Tensor(p.values)).item()
            flat[i] = saved
            fd[i] = (hi - lo) / (2.0 * eps)
    fd = fd.reshape(analytic.shape)
    err = np.abs(analytic - fd) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0


def gradcheck_cases():
    """(name, sampler) pairs covering every differentiable primitive.

    Each sampler draws a (fn, point) pair at a domain-safe location: away
    from |x|=0 kinks for abs/log/div, away from floors for clamp, with
    well-separated values for max/min so the finite difference cannot cross
    an argmax tie.
    """

    def pt(rng, n=5, lo=0.5, hi=2.0, signed=True):
        mag = rng.uniform(lo, hi, size=(n, 1))
        if signed:
            mag *= rng.choice([-1.0, 1.0], size=(n, 1))
        return Tensor(mag)

    def spread(rng, n=6):
        base = rng.normal(0.0, 1.0, size=(n, 1))
        return Tensor(base + np.arange(n)[:, None] * 0.3)  # keeps extrema untied

    ids = np.array([0, 0, 1, 1, 1, 2])

    # constants are drawn once per sampler call so fn is pure across re-evals
    def binary(op, signed=True):
        def sample(rng):
            c = pt(rng, signed=signed)
            return (lambda t: op(t, c).sum()), pt(rng, signed=signed)

        return sample

    def unary(op, point):
        def sample(rng):
            return (lambda t: op(t).sum()), point(rng)

        return sample

    def weighted(build, point_shape, w_shape):
        def sample(rng):
            w = Tensor(rng.normal(0.0, 1.0, w_shape))
            return (lambda t: (build(t) * w).sum()), Tensor(rng.normal(0.0, 1.0, point_shape))

        return sample

    def seg(kind):
        def sample(rng):
            w = Tensor(rng.normal(0.0, 1.0, (3, 1)))
            return (lambda t: (segment_reduce(t, ids, 3, kind) * w).sum()), spread(rng)

        return sample

    def matmul_lhs(rng):
        c = Tensor(rng.normal(0.0, 1.0, (3, 2)))
        return (lambda t: (t @ c).sum()), Tensor(rng.normal(0.0, 1.0, (4, 3)))

    def matmul_rhs(rng):
        c = Tensor(rng.normal(0.0, 1.0, (4, 3)))
        return (lambda t: (c @ t).sum()), Tensor(rng.normal(0.0, 1.0, (3, 2)))

    def take(rng):
        w = Tensor(rng.normal(0.0, 1.0, (4, 2)))
        return (lambda t: (take_rows(t, np.array([0, 2, 2, 1])) * w).sum()), Tensor(rng.normal(0.0, 1.0, (3, 2)))

    def concat(rng):
        w = Tensor(rng.normal(0.0, 1.0, (4, 2)))
        return (lambda t: (concat_cols([t, t * 2.0]) * w).sum()), Tensor(rng.normal(0.0, 1.0, (4, 1)))

    def concat_r(rng):
        w = Tensor(rng.normal(0.0, 1.0, (8, 2)))
        return (lambda t: (concat_rows([t, t * -1.5]) * w).sum()), Tensor(rng.normal(0.0, 1.0, (4, 2)))

    return [
        ("add", binary(lambda t, c: t + c)),
        ("sub", binary(lambda t, c: c - t)),
        ("mul", binary(lambda t, c: t * c)),
        ("div_num", binary(lambda t, c: t / c)),
        ("div_den", binary(lambda t, c: c / t)),
        ("pow_square", unary(lambda t: t**2.0, pt)),
        ("pow_sqrt", unary(lambda t: t**0.5, lambda rng: pt(rng, signed=False))),
        ("neg", unary(lambda t: -t, pt)),
        ("exp", unary(lambda t: t.exp(), pt)),
        ("log", unary(lambda t: t.log(), pt)),
        ("abs", unary(lambda t: t.abs(), pt)),
        ("tanh", unary(lambda t: t.tanh(), pt)),
        ("mish", unary(lambda t: t.mish(), lambda rng: Tensor(rng.normal(0.0, 2.0, (5, 1))))),
        ("clamp_min", unary(lambda t: t.clamp_min(0.25), pt)),
        ("sqrt_guard", unary(sqrt_guard, lambda rng: pt(rng, signed=False))),
        ("matmul_lhs", matmul_lhs),
        ("matmul_rhs", matmul_rhs),
        ("total", unary(lambda t: t, lambda rng: Tensor(rng.normal(0.0, 1.0, (4, 3))))),
        ("sum_rows", weighted(lambda t: t.sum0(), (4, 3), (1, 3))),
        ("transpose", weighted(lambda t: t.transpose(), (4, 3), (3, 4))),
        ("reshape", weighted(lambda t: t.reshape((2, 6)), (4, 3), (2, 6))),
        ("tile_rows", weighted(lambda t: tile_rows(t, 4), (1, 3), (4, 3))),
        ("tile_cols", weighted(lambda t: tile_cols(t, 3), (4, 1), (4, 3))),
        ("take_rows", take),
        ("concat_cols", concat),
        ("concat_rows", concat_r),
        ("segment_sum", seg("sum")),
        ("segment_mean", seg("mean")),
        ("segment_max", seg("max")),
        ("segment_min", seg("min")),
    ]


# rng / init -----------------------------------------------------------------


def rng_stream(seed: int, *tags) -> np.random.Generator:
    """Named deterministic stream: Philox keyed by seed plus hashed tags.

    Streams with different tags are independent; the same (seed, tags) always
    reproduces the same draws regardless of creation order.
    """
    spawn_key = tuple(zlib.crc32(repr(t).encode("utf-8")) for t in tags)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class KaimingNormal:
    fan_in: int

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.normal(0.0, math.sqrt(2.0 / self.fan_in), size=shape)


@dataclass(frozen=True)
class Zeros:
    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return np.zeros(shape)


@dataclass(frozen=True)
class Constant:
    value: float

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return np.full(shape, float(self.value))


InitScheme = KaimingNormal | Zeros | Constant
