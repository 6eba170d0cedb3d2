"""Random directed graphs and the GraphConv stack used in the experiments.

A Graph is immutable structure: edge (i, j) means j sends messages to i, so
node i's neighbourhood is {j : (i, j) in edges}. Generation fixes the edge
count at floor(density * n^2) distinct non-self pairs, then repairs any node
with an empty neighbourhood by adding one edge from a uniformly chosen other
node, so segment reductions never see an empty segment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .aggregators import SegmentedSet
from .tensor import ShapeError, Tensor, mish, rng_stream, take_rows


class GraphError(ValueError):
    pass


@dataclass
class Graph:
    """n_nodes, edges [E, 2] of (dst, src), features [n_nodes, d]."""

    n_nodes: int
    edges: np.ndarray
    features: Tensor
    seed: int | None = None
    repaired: tuple[int, ...] = ()
    # sorted-by-destination views, precomputed once
    segment_ids: np.ndarray = field(init=False)
    src_rows: np.ndarray = field(init=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64)
        if self.edges.ndim != 2 or self.edges.shape[1] != 2:
            raise GraphError(f"edges must be [E, 2], got {self.edges.shape}")
        if self.n_nodes < 1:
            raise GraphError(f"need at least one node, got {self.n_nodes}")
        if self.edges.shape[0] == 0:
            raise GraphError("graph has no edges")
        if self.edges.min() < 0 or self.edges.max() >= self.n_nodes:
            raise GraphError(f"edge endpoint out of range [0, {self.n_nodes})")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise GraphError("self loops are not allowed")
        flat = self.edges[:, 0] * self.n_nodes + self.edges[:, 1]
        if np.unique(flat).size != flat.size:
            raise GraphError("duplicate edges are not allowed")
        if self.features.ndim != 2 or self.features.shape[0] != self.n_nodes:
            raise GraphError(
                f"features must be [{self.n_nodes}, d], got {self.features.shape}"
            )
        order = np.argsort(self.edges[:, 0], kind="stable")
        self.segment_ids = self.edges[order, 0]
        self.src_rows = self.edges[order, 1]
        present = np.unique(self.segment_ids)
        if present.size != self.n_nodes:
            missing = np.setdiff1d(np.arange(self.n_nodes), present)
            raise GraphError(f"node {int(missing[0])} has an empty neighbourhood")

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def neighbourhoods(self, values: Tensor | None = None) -> SegmentedSet:
        """Per-node multiset of neighbour rows, over `values` (default: the
        graph's own features)."""
        v = self.features if values is None else values
        return SegmentedSet(take_rows(v, self.src_rows), self.segment_ids, self.n_nodes)


def _sample_edges(n: int, m_target: int, rng) -> np.ndarray:
    # sample m_target distinct ordered non-self pairs, uniformly
    avail = n * (n - 1)
    pick = rng.choice(avail, size=m_target, replace=False)
    dst = pick // (n - 1)
    rem = pick % (n - 1)
    src = rem + (rem >= dst)  # skip the diagonal
    return np.stack([dst, src], axis=1)


def _repair_in_degree(n: int, edges: np.ndarray, rng) -> tuple[np.ndarray, list[int]]:
    have = np.zeros(n, dtype=bool)
    have[np.unique(edges[:, 0])] = True
    repaired = np.flatnonzero(~have)
    extra = []
    for node in repaired:
        other = int(rng.integers(0, n - 1))
        other += other >= node
        extra.append((node, other))
    if extra:
        edges = np.concatenate([edges, np.asarray(extra, dtype=np.int64)], axis=0)
    return edges, [int(i) for i in repaired]


def random_graph(n_nodes: int, density: float, feature_dim: int, seed: int) -> Graph:
    """Fixed-size random graph: floor(density * n^2) edges, N(0,1) features.

    density is |E| / n^2 before in-degree repair; 0 < density and the implied
    edge count must fit in the n(n-1) non-self pairs.
    """
    if n_nodes < 2:
        raise GraphError(f"need at least 2 nodes, got {n_nodes}")
    m_target = int(density * n_nodes * n_nodes)
    if m_target < 1:
        raise GraphError(f"density {density} gives no edges for n={n_nodes}")
    if m_target > n_nodes * (n_nodes - 1):
        raise GraphError(
            f"density {density} asks for {m_target} edges, only "
            f"{n_nodes * (n_nodes - 1)} non-self pairs exist"
        )
    rng = rng_stream(seed, "graph", "edges")
    edges = _sample_edges(n_nodes, m_target, rng)
    edges, repaired = _repair_in_degree(n_nodes, edges, rng)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    features = rng_stream(seed, "graph", "features").standard_normal((n_nodes, feature_dim))
    return Graph(n_nodes, edges, Tensor(features), seed=seed, repaired=tuple(repaired))


# fixture io -----------------------------------------------------------------


def graph_to_json(g: Graph) -> dict:
    return {
        "n_nodes": g.n_nodes,
        "edges": g.edges.tolist(),
        "features": g.features.values.reshape(-1).tolist(),  # row-major
        "seed": g.seed,
    }


def graph_from_json(doc: dict) -> Graph:
    n = int(doc["n_nodes"])
    flat = np.asarray(doc["features"], dtype=np.float64)
    if n < 1 or flat.size % n != 0:
        raise GraphError(f"feature payload of {flat.size} does not tile {n} nodes")
    features = flat.reshape(n, flat.size // n)
    return Graph(n, np.asarray(doc["edges"]), Tensor(features), seed=doc.get("seed"))


def save_graph(g: Graph, path):
    with open(path, "w") as fh:
        json.dump(graph_to_json(g), fh)


def load_graph(path) -> Graph:
    with open(path) as fh:
        return graph_from_json(json.load(fh))


# graphconv ------------------------------------------------------------------


class GraphConvLayer:
    """z' = act(W1 z + W2 AGG_{j in N(i)} z_j). No biases.

    aggregator is any handle with the (SegmentedSet) -> (out, aux) call
    shape; aux (inverse-consistency loss for learnable aggregators) is
    passed through.
    """

    def __init__(self, d_in: int, d_out: int, aggregator, rng, activation: str | None = "mish"):
        from .tensor import KaimingNormal

        if activation not in ("mish", None):
            raise ValueError(f"unknown activation {activation!r}")
        self.d_in = d_in
        self.d_out = d_out
        self.w1 = Tensor(KaimingNormal(d_in).sample(rng, (d_in, d_out)), requires_grad=True)
        self.w2 = Tensor(KaimingNormal(d_in).sample(rng, (d_in, d_out)), requires_grad=True)
        self.aggregator = aggregator
        self.activation = activation

    def __call__(self, g: Graph, z: Tensor):
        neigh = g.neighbourhoods(z)
        agg, aux = self.aggregator(neigh)
        out = z @ self.w1 + agg @ self.w2
        if self.activation == "mish":
            out = mish(out)
        return out, aux

    def parameters(self):
        return [self.w1, self.w2] + self.aggregator.parameters()


class Gnn:
    """A stack of GraphConv layers; activations on all but the last."""

    def __init__(self, layers: list[GraphConvLayer]):
        if not layers:
            raise ShapeError("a GNN needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.d_out != b.d_in:
                raise ShapeError(
                    f"layer width mismatch: {a.d_out} out feeds {b.d_in} in"
                )
        if layers[-1].activation is not None:
            raise ShapeError("the last layer must be linear (activation=None)")
        self.layers = layers

    def __call__(self, g: Graph):
        if g.feature_dim != self.layers[0].d_in:
            raise ShapeError(
                f"graph features d={g.feature_dim}, model expects {self.layers[0].d_in}"
            )
        z = g.features
        aux_total = Tensor(np.zeros(()))
        for layer in self.layers:
            z, aux = layer(g, z)
            if aux is not None:
                aux_total = aux_total + aux
        return z, aux_total

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def train(self):
        for layer in self.layers:
            layer.aggregator.train()

    def eval(self):
        for layer in self.layers:
            layer.aggregator.eval()


def build_gnn(feature_dim: int, hidden_dim: int, n_layers: int, make_aggregator, seed: int) -> Gnn:
    """Standard experiment stack: d -> hidden -> ... -> hidden -> d, Mish on
    all but the final layer, one independently constructed aggregator each.

    make_aggregator(d_in, layer_index) -> handle.
    """
    if n_layers < 1:
        raise ShapeError("n_layers must be >= 1")
    widths = [feature_dim] + [hidden_dim] * (n_layers - 1) + [feature_dim]
    layers = []
    for i in range(n_layers):
        rng = rng_stream(seed, "gnn", "layer", i)
        act = "mish" if i < n_layers - 1 else None
        layers.append(GraphConvLayer(widths[i], widths[i + 1], make_aggregator(widths[i], i), rng, act))
    return Gnn(layers)


def union_graph(graphs: list[Graph]) -> Graph:
    """Disjoint union: one big Graph whose segments never cross members."""
    if not graphs:
        raise GraphError("union of no graphs")
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs[:-1]])
    edges = np.concatenate([g.edges + off for g, off in zip(graphs, offsets)], axis=0)
    feats = np.concatenate([g.features.values for g in graphs], axis=0)
    return Graph(int(sum(g.n_nodes for g in graphs)), edges, Tensor(feats))
