"""Regression experiments: can a learnable aggregator recover a ground-truth
reduction from observations alone?

Two settings share one harness shape. In the set-level setting the model sees
random neighbourhood multisets and regresses the target aggregate directly;
in the GNN setting a 4-layer GraphConv stack must match node-level targets
computed by the ground-truth aggregator on neighbour input features, so the
aggregator is trained through message passing. Both draw fresh random graphs
every epoch and evaluate Pearson correlation on a held-out graph set whose
seed is shared by every method and trial of a comparison.
"""

from __future__ import annotations

import csv
import hashlib
import json
import multiprocessing
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .afm import GenAgg, NonFiniteError, afm_forward, symbolic_params_for
from .aggregators import (
    FixedAggregator,
    PnaAggregator,
    PowerAggregator,
    SegmentedSet,
    SoftmaxAggregator,
    StandardAggregator,
    aggregate_standard,
)
from .graph import Graph, build_gnn
from .optim import Adam
from .tensor import Tensor, backward, no_grad, rng_stream


class ExperimentError(RuntimeError):
    pass


class DegenerateTargetError(ValueError):
    """Ground truth is constant; correlation is undefined."""


AGGREGATOR_REGRESSION = "aggregator_regression"
GNN_REGRESSION = "gnn_regression"

TARGET_NAMES = tuple(a.value for a in StandardAggregator)

METHOD_NAMES = ("genagg", "mean", "sum", "max", "min", "softmax", "powermean", "pna")

_DEFAULTS = {
    AGGREGATOR_REGRESSION: {"epochs": 2000, "batch_graphs": 256, "feature_dim": 6},
    GNN_REGRESSION: {"epochs": 1500, "batch_graphs": 32, "feature_dim": 1},
}


@dataclass
class ExperimentConfig:
    experiment: str
    target: str
    method: str
    seed: int = 0
    trials: int = 3
    epochs: int | None = None
    batch_graphs: int | None = None
    feature_dim: int | None = None
    n_nodes: int = 8
    density: float = 0.3
    lr: float = 1e-3
    lambda_inv: float = 1.0
    eval_graphs: int = 128
    hidden_dim: int = 16
    n_layers: int = 4

    def __post_init__(self):
        if self.experiment not in _DEFAULTS:
            raise ExperimentError(
                f"unknown experiment {self.experiment!r}; valid: {sorted(_DEFAULTS)}"
            )
        if self.target not in TARGET_NAMES:
            raise ExperimentError(
                f"unknown target {self.target!r}; valid: {', '.join(TARGET_NAMES)}"
            )
        if self.method not in METHOD_NAMES:
            raise ExperimentError(
                f"unknown method {self.method!r}; valid: {', '.join(METHOD_NAMES)}"
            )
        defaults = _DEFAULTS[self.experiment]
        if self.epochs is None:
            self.epochs = defaults["epochs"]
        if self.batch_graphs is None:
            self.batch_graphs = defaults["batch_graphs"]
        if self.feature_dim is None:
            self.feature_dim = defaults["feature_dim"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(**doc)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class ResultRecord:
    experiment: str
    target: str
    method: str
    trial: int
    seed: int
    r: float
    mse: float
    seconds: float
    config_hash: str
    inv_loss: float | None = None
    train_curve: list[float] = field(default_factory=list)

    CSV_FIELDS = ("experiment", "target", "method", "trial", "seed", "r", "mse", "seconds")

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self.CSV_FIELDS]

    def to_dict(self) -> dict:
        return asdict(self)


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ResultRecord.CSV_FIELDS)
        for rec in records:
            w.writerow(rec.csv_row())


def write_json(records, path):
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=1)


def derive_seed(base: int, *tags) -> int:
    return int(rng_stream(base, *tags).integers(2**63))


def pearson(pred: np.ndarray, truth: np.ndarray) -> float:
    """Pearson r. Constant truth raises; constant prediction scores 0."""
    a = np.asarray(pred, dtype=np.float64).ravel()
    b = np.asarray(truth, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ExperimentError(f"pearson: length mismatch {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    sb = float(np.sqrt((b * b).sum()))
    if sb == 0.0:
        raise DegenerateTargetError("ground-truth values are constant; r is undefined")
    sa = float(np.sqrt((a * a).sum()))
    if sa == 0.0:
        return 0.0
    return float((a * b).sum() / (sa * sb))


def mse_loss(pred: Tensor, y: Tensor) -> Tensor:
    d = pred - y
    return (d * d).mean()


# data generation --------------------------------------------------------------


def sample_batch(rng, n_graphs: int, n_nodes: int, density: float, feature_dim: int):
    """Vectorised draw of n_graphs independent random graphs as one disjoint
    union: (features [G*n, d], segment_ids [M], src_rows [M]), ids sorted.

    Same construction as graph.random_graph: floor(density*n^2) distinct
    non-self edges per graph, then one incoming edge from a uniform other
    node for any node left without neighbours.
    """
    n, G = n_nodes, n_graphs
    m_target = int(density * n * n)
    avail = n * (n - 1)
    scores = rng.random((G, avail))
    idx = np.argpartition(scores, m_target, axis=1)[:, :m_target]  # uniform distinct subset
    dst = idx // (n - 1)
    rem = idx % (n - 1)
    src = rem + (rem >= dst)

    present = np.zeros((G, n), dtype=bool)
    present[np.arange(G)[:, None], dst] = True
    gi, bare = np.nonzero(~present)
    other = rng.integers(0, n - 1, size=bare.size)
    other += other >= bare

    offs = (np.arange(G) * n)[:, None]
    seg = np.concatenate([(dst + offs).ravel(), gi * n + bare])
    srcg = np.concatenate([(src + offs).ravel(), gi * n + other])
    order = np.argsort(seg, kind="stable")
    features = rng.standard_normal((G * n, feature_dim))
    return features, seg[order], srcg[order]


def target_values(agg: StandardAggregator, neigh: SegmentedSet) -> np.ndarray:
    """Ground-truth regression targets for one aggregator.

    The harmonic-mean benchmark is the magnitude variant (harmonic mean of
    |x|): the raw reciprocal sum over signed Normal features has unbounded
    heavy tails, which no square-loss regression can track.
    """
    if StandardAggregator(agg) is StandardAggregator.HARMONIC_MEAN:
        neigh = SegmentedSet(
            Tensor(np.abs(neigh.values.values)), neigh.segment_ids, neigh.n_segments
        )
    return aggregate_standard(agg, neigh).values


def build_method(name: str, feature_dim: int, seed: int):
    """Set-level aggregation handle for one method name."""
    if name == "genagg":
        return GenAgg(seed)
    if name in FixedAggregator.KINDS:
        return FixedAggregator(name)
    if name == "softmax":
        return SoftmaxAggregator()
    if name == "powermean":
        return PowerAggregator()
    if name == "pna":
        return PnaAggregator(feature_dim, rng_stream(seed, "pna"))
    raise ExperimentError(f"unknown method {name!r}; valid: {', '.join(METHOD_NAMES)}")


# trial runners -----------------------------------------------------------------


def _curve_stride(epochs: int) -> int:
    return max(1, epochs // 200)


def run_aggregator_trial(cfg: ExperimentConfig, trial: int) -> ResultRecord:
    if cfg.experiment != AGGREGATOR_REGRESSION:
        raise ExperimentError(f"config is for {cfg.experiment}")
    agg = StandardAggregator(cfg.target)
    cell_seed = derive_seed(cfg.seed, cfg.experiment, cfg.target, cfg.method, trial)
    train_rng = rng_stream(cell_seed, "train")
    model = build_method(cfg.method, cfg.feature_dim, cell_seed)
    model.train()
    opt = Adam(model.parameters(), lr=cfg.lr)
    trainable = bool(opt.params)
    stride = _curve_stride(cfg.epochs)
    curve = []

    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        feats, seg, srcs = sample_batch(train_rng, cfg.batch_graphs, cfg.n_nodes, cfg.density, cfg.feature_dim)
        s = SegmentedSet(Tensor(feats[srcs]), seg, cfg.batch_graphs * cfg.n_nodes)
        y = Tensor(target_values(agg, s))
        try:
            pred, aux = model(s)
            loss = mse_loss(pred, y)
            if aux is not None:
                loss = loss + cfg.lambda_inv * aux
            lv = loss.item()
        except NonFiniteError as e:
            raise ExperimentError(
                f"{cfg.method} on {cfg.target}: diverged at epoch {epoch}: {e}"
            ) from e
        if not np.isfinite(lv):
            raise ExperimentError(
                f"{cfg.method} on {cfg.target}: non-finite loss at epoch {epoch}"
            )
        if epoch % stride == 0:
            curve.append(lv)
        if trainable:
            backward(loss)
            opt.step()
    seconds = time.perf_counter() - t0

    model.eval()
    erng = rng_stream(cfg.seed, "eval", cfg.experiment)
    feats, seg, srcs = sample_batch(erng, cfg.eval_graphs, cfg.n_nodes, cfg.density, cfg.feature_dim)
    s = SegmentedSet(Tensor(feats[srcs]), seg, cfg.eval_graphs * cfg.n_nodes)
    y = target_values(agg, s)
    with no_grad():
        pred, _ = model(s)
    r = pearson(pred.values, y)
    emse = float(np.mean((pred.values - y) ** 2))
    inv = None
    if isinstance(model, GenAgg):
        inv = model.inv_probe_loss(4096, rng_stream(cell_seed, "inv_probes"))
    return ResultRecord(
        cfg.experiment, cfg.target, cfg.method, trial, cell_seed, r, emse, seconds,
        cfg.config_hash(), inv_loss=inv, train_curve=curve,
    )


def _gnn_batch(rng, cfg: ExperimentConfig):
    feats, seg, srcs = sample_batch(rng, cfg.batch_graphs, cfg.n_nodes, cfg.density, cfg.feature_dim)
    g = Graph(cfg.batch_graphs * cfg.n_nodes, np.stack([seg, srcs], axis=1), Tensor(feats))
    return g


def _gnn_eval_graph(cfg: ExperimentConfig):
    erng = rng_stream(cfg.seed, "eval", cfg.experiment)
    feats, seg, srcs = sample_batch(erng, cfg.eval_graphs, cfg.n_nodes, cfg.density, cfg.feature_dim)
    return Graph(cfg.eval_graphs * cfg.n_nodes, np.stack([seg, srcs], axis=1), Tensor(feats))


def run_gnn_trial(cfg: ExperimentConfig, trial: int) -> ResultRecord:
    if cfg.experiment != GNN_REGRESSION:
        raise ExperimentError(f"config is for {cfg.experiment}")
    agg = StandardAggregator(cfg.target)
    cell_seed = derive_seed(cfg.seed, cfg.experiment, cfg.target, cfg.method, trial)
    train_rng = rng_stream(cell_seed, "train")

    def make_agg(d_in: int, layer_idx: int):
        return build_method(cfg.method, d_in, derive_seed(cell_seed, "agg", layer_idx))

    model = build_gnn(cfg.feature_dim, cfg.hidden_dim, cfg.n_layers, make_agg, cell_seed)
    model.train()
    opt = Adam(model.parameters(), lr=cfg.lr)
    stride = _curve_stride(cfg.epochs)
    curve = []

    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        g = _gnn_batch(train_rng, cfg)
        y = Tensor(target_values(agg, g.neighbourhoods()))
        try:
            pred, aux = model(g)
            loss = mse_loss(pred, y) + cfg.lambda_inv * aux
            lv = loss.item()
        except NonFiniteError as e:
            raise ExperimentError(
                f"gnn/{cfg.method} on {cfg.target}: diverged at epoch {epoch}: {e}"
            ) from e
        if not np.isfinite(lv):
            raise ExperimentError(
                f"gnn/{cfg.method} on {cfg.target}: non-finite loss at epoch {epoch}"
            )
        if epoch % stride == 0:
            curve.append(lv)
        backward(loss)
        opt.step()
    seconds = time.perf_counter() - t0

    model.eval()
    g = _gnn_eval_graph(cfg)
    y = target_values(agg, g.neighbourhoods())
    with no_grad():
        pred, _ = model(g)
    r = pearson(pred.values, y)
    emse = float(np.mean((pred.values - y) ** 2))
    return ResultRecord(
        cfg.experiment, cfg.target, cfg.method, trial, cell_seed, r, emse, seconds,
        cfg.config_hash(), train_curve=curve,
    )


def run_trial(cfg: ExperimentConfig, trial: int) -> ResultRecord:
    if cfg.experiment == AGGREGATOR_REGRESSION:
        return run_aggregator_trial(cfg, trial)
    return run_gnn_trial(cfg, trial)


def _cell_worker(payload):
    doc, trial = payload
    return run_trial(ExperimentConfig.from_dict(doc), trial).to_dict()


def run_cells(cells: list[tuple[ExperimentConfig, int]], jobs: int = 1) -> list[ResultRecord]:
    """Run (config, trial) cells, optionally across processes. Order is
    preserved; each cell derives its own seed, so splitting is safe."""
    if jobs <= 1:
        return [run_trial(cfg, t) for cfg, t in cells]
    payloads = [(cfg.to_dict(), t) for cfg, t in cells]
    with multiprocessing.Pool(jobs) as pool:
        docs = pool.map(_cell_worker, payloads)
    out = []
    for doc in docs:
        doc = dict(doc)
        out.append(ResultRecord(**doc))
    return out


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRecord]:
    return run_cells([(cfg, t) for t in range(cfg.trials)], jobs=jobs)


# closed-form verification -------------------------------------------------------


def random_segments(rng, n_segments: int, feature_dim: int = 2, max_size: int = 10) -> SegmentedSet:
    sizes = rng.integers(1, max_size + 1, size=n_segments)
    ids = np.repeat(np.arange(n_segments), sizes)
    values = rng.standard_normal((int(sizes.sum()), feature_dim))
    return SegmentedSet(Tensor(values), ids, n_segments)


def verify_parametrisations(n_sets: int = 1000, seed: int = 0, feature_dim: int = 2) -> list[dict]:
    """Closed-form augmented f-mean vs direct reduction on random multisets.

    Returns a report row per aggregator with the max relative error over
    n_sets segments (sizes 1..10, N(0,1) values). Limit-case rows must match
    exactly; the rest are float-rounding away from the direct formulas.
    """
    rows = []
    for agg in StandardAggregator:
        rng = rng_stream(seed, "verify", agg.value)
        s = random_segments(rng, n_sets, feature_dim)
        direct = aggregate_standard(agg, s).values
        with no_grad():
            via_afm = afm_forward(symbolic_params_for(agg), s).values
        rel = np.abs(via_afm - direct) / np.maximum(np.abs(direct), 1e-30)
        rows.append(
            {
                "aggregator": agg.value,
                "max_rel_err": float(rel.max()),
                "exact": bool(np.array_equal(via_afm, direct)),
                "n_sets": n_sets,
            }
        )
    return rows
