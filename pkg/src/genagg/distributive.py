"""Which binary operations distribute over which aggregators, and how.

An operation psi distributes over an aggregator AGG when
psi(c, AGG(x_1..x_n)) = AGG(psi(c, x_1)..psi(c, x_n)). For any augmented
f-mean with beta=0, psi(a, b) = f_inv(f(a) * f(b)) satisfies this for every
alpha; when alpha=0 as well, psi(a, b) = f_inv(f(a) + f(b)) is a second
solution. The catalog below lists the closed forms these two constructions
reduce to for each standard aggregator; min/max style rows distribute over
themselves directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .afm import AfmParams, LimitCase, SymbolicF, afm_forward, symbolic_params_for
from .aggregators import SegmentedSet, StandardAggregator
from .tensor import Tensor, no_grad


class DistOperator(Enum):
    """How psi combines the two mapped values inside f-space."""

    MULTIPLICATIVE = "multiplicative"  # f_inv(f(a) * f(b)); needs beta=0
    ADDITIVE = "additive"  # f_inv(f(a) + f(b)); needs alpha=0 and beta=0


class DistributiveError(ValueError):
    """psi requested outside the regime where the identity holds."""


class NonFinitePsiError(ArithmeticError):
    pass


def psi_apply(f: SymbolicF, op: DistOperator, a: float, b: float) -> float:
    """Evaluate psi(a, b) for a closed-form f. Scalar in, scalar out."""
    with no_grad():
        fa = f.eval(Tensor([[float(a)]]))
        fb = f.eval(Tensor([[float(b)]]))
        combined = fa * fb if op is DistOperator.MULTIPLICATIVE else fa + fb
        out = f.inverse(combined).item()
    if not np.isfinite(out):
        raise NonFinitePsiError(f"psi non-finite: f={f.name} op={op.value} a={a!r} b={b!r}")
    return out


def _psi_many(f: SymbolicF, op: DistOperator, c: float, xs: np.ndarray) -> np.ndarray:
    """psi(c, x) over a whole probe multiset in one tensor pass."""
    with no_grad():
        fc = f.eval(Tensor([[float(c)]]))
        fx = f.eval(Tensor(xs[:, None]))
        combined = fx * fc if op is DistOperator.MULTIPLICATIVE else fx + fc
        out = f.inverse(combined).values.ravel()
    if not np.all(np.isfinite(out)):
        raise NonFinitePsiError(f"psi non-finite: f={f.name} op={op.value} c={c!r}")
    return out


def check_gdp(params: AfmParams, op: DistOperator, c: float, xs) -> float:
    """Relative residual of the distributive identity on one probe.

    |psi(c, AGG(xs)) - AGG([psi(c, x) for x in xs])| / max(1, |lhs|).
    Raises DistributiveError outside the identity's regime (beta != 0, or an
    additive psi with alpha != 0).
    """
    f = params.f
    if isinstance(f, LimitCase):
        raise DistributiveError("limit-case aggregators distribute directly; use check_gdp_limit")
    beta = float(params.beta)
    alpha = float(params.alpha)
    if beta != 0.0:
        raise DistributiveError(f"distributive identity requires beta=0, got beta={beta}")
    if op is DistOperator.ADDITIVE and alpha != 0.0:
        raise DistributiveError(f"additive psi requires alpha=0, got alpha={alpha}")

    xs = np.asarray([float(x) for x in xs], dtype=np.float64)
    if xs.size == 0:
        raise DistributiveError("empty probe multiset")

    def agg(values: np.ndarray) -> float:
        s = SegmentedSet(Tensor(values[:, None]), np.zeros(values.size, dtype=np.int64), 1)
        with no_grad():
            return afm_forward(params, s).item()

    lhs = psi_apply(f, op, c, agg(xs))
    rhs = agg(_psi_many(f, op, c, xs))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def check_gdp_limit(case: LimitCase, c: float, xs) -> float:
    """min/max (and magnitude variants) distribute over themselves; the
    residual is exact zero on any inputs, integers included."""
    xs = [float(x) for x in xs]
    if not xs:
        raise DistributiveError("empty probe multiset")
    if case is LimitCase.MIN:
        lhs = min(c, min(xs))
        rhs = min(min(c, x) for x in xs)
    elif case is LimitCase.MAX:
        lhs = max(c, max(xs))
        rhs = max(max(c, x) for x in xs)
    elif case is LimitCase.MIN_MAGNITUDE:
        lhs = min(abs(c), min(abs(x) for x in xs))
        rhs = min(min(abs(c), abs(x)) for x in xs)
    else:
        lhs = max(abs(c), max(abs(x) for x in xs))
        rhs = max(max(abs(c), abs(x)) for x in xs)
    return abs(lhs - rhs)


@dataclass(frozen=True)
class CatalogEntry:
    aggregator: StandardAggregator
    operator: DistOperator | None  # None for the self-distributing limit rows
    label: str
    alpha: float = 0.0


def distributive_catalog() -> list[CatalogEntry]:
    """Every (aggregator, psi) pair the identity yields, with display forms.

    std's augmented form uses beta=1, outside the theorem; its entry carries
    the beta=0 projection (same f and psi as RMS's multiplicative row), which
    is exactly the scale identity std(c*X) = |c|*std(X).
    """
    A = StandardAggregator
    M = DistOperator.MULTIPLICATIVE
    P = DistOperator.ADDITIVE
    return [
        CatalogEntry(A.MEAN, P, "a+b", alpha=0.0),
        CatalogEntry(A.MEAN, M, "a·b", alpha=0.0),
        CatalogEntry(A.SUM, M, "a·b", alpha=1.0),
        CatalogEntry(A.PRODUCT, M, "|a|^{log|b|}", alpha=1.0),
        CatalogEntry(A.MIN_MAGNITUDE, None, "min(|a|,|b|)"),
        CatalogEntry(A.MAX_MAGNITUDE, None, "max(|a|,|b|)"),
        CatalogEntry(A.MIN, None, "min(a,b)"),
        CatalogEntry(A.MAX, None, "max(a,b)"),
        CatalogEntry(A.HARMONIC_MEAN, P, "a·b/(a+b)", alpha=0.0),
        CatalogEntry(A.HARMONIC_MEAN, M, "a·b", alpha=0.0),
        CatalogEntry(A.GEOMETRIC_MEAN, P, "|a|·|b|", alpha=0.0),
        CatalogEntry(A.GEOMETRIC_MEAN, M, "|a|^{log|b|}", alpha=0.0),
        CatalogEntry(A.ROOT_MEAN_SQUARE, P, "√(a²+b²)", alpha=0.0),
        CatalogEntry(A.ROOT_MEAN_SQUARE, M, "|a|·|b|", alpha=0.0),
        CatalogEntry(A.EUCLIDEAN_NORM, M, "|a|·|b|", alpha=1.0),
        CatalogEntry(A.STANDARD_DEVIATION, M, "|a|·|b|", alpha=0.0),
        CatalogEntry(A.LOG_SUM_EXP, M, "a+b", alpha=1.0),  # exp(a)*exp(b) pulled back is a+b
    ]


def _entry_params(entry: CatalogEntry) -> AfmParams:
    base = symbolic_params_for(entry.aggregator)
    # catalog rows live in the beta=0 regime; alpha comes from the entry
    return AfmParams(base.f, entry.alpha, 0.0)


def verify_distributive(n_probes: int = 1000, seed: int = 0) -> list[dict]:
    """Residual sweep over the whole catalog.

    Closed-form rows draw positive log-uniform probes in [1e-2, 1e2]; limit
    rows draw small integers (where min/max identities are exact). Returns
    one report dict per entry with the max residual observed.
    """
    from .tensor import rng_stream

    rows = []
    for entry in distributive_catalog():
        rng = rng_stream(seed, "gdp", entry.aggregator.value, entry.label)
        worst = 0.0
        if entry.operator is None:
            case = LimitCase(entry.aggregator.value)
            for _ in range(n_probes):
                k = int(rng.integers(1, 11))
                xs = rng.integers(-20, 21, size=k).astype(float)
                c = float(rng.integers(-20, 21))
                worst = max(worst, check_gdp_limit(case, c, xs))
        else:
            params = _entry_params(entry)
            for _ in range(n_probes):
                k = int(rng.integers(1, 11))
                xs = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=k))
                c = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
                worst = max(worst, check_gdp(params, entry.operator, c, xs))
        rows.append(
            {
                "aggregator": entry.aggregator.value,
                "psi": entry.label,
                "operator": entry.operator.value if entry.operator else "self",
                "alpha": entry.alpha,
                "max_residual": worst,
                "n_probes": n_probes,
            }
        )
    return rows
