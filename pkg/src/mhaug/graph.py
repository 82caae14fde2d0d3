"""Graph representation and change-ratio computation.

Change ratios of an augmented graph are measured in two ways: the full-graph
ratio (fraction of dropped edges / nodes) and the per-node ego-graph ratio,
which is the fractional loss of k-hop messages received at each node.  The
latter is computed from adjacency-power row sums, ``(A'^k 1)_i``, using
repeated sparse matrix-vector products over the kept edge list.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "GraphValidationError",
    "AugmentationState",
    "PropagationCache",
    "propagate",
    "adjacency_power_row_sums",
    "adjacency_power_apply",
    "ego_change_ratios",
    "full_change_ratios",
    "ego_graph_extract",
    "identity_state",
    "make_state",
]

UNLABELED = -1


class GraphValidationError(ValueError):
    """Raised when a graph breaks one of its structural invariants."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected base graph with node features, labels and split masks.

    Parameters
    ----------
    num_nodes : int
    edges : ndarray of shape (m, 2)
        Undirected pairs, stored with ``u < v``. Self-loops are implicit and
        never stored.
    features : ndarray of shape (num_nodes, d)
    labels : ndarray of shape (num_nodes,)
        Class index per node, ``-1`` for unlabeled.
    train_mask, val_mask, test_mask : boolean ndarray of shape (num_nodes,)
    num_classes : int, optional
        Inferred from the labels when omitted.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int = -1
    _src: np.ndarray = field(init=False, repr=False)
    _dst: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 0:
            raise GraphValidationError("num_nodes must be non-negative")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise GraphValidationError("edge endpoint out of range: every endpoint must be < num_nodes")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphValidationError("self-edge: stored edges must have u != v")
        edges = np.sort(edges, axis=1)
        keys = edges[:, 0] * max(n, 1) + edges[:, 1]
        if np.unique(keys).size != keys.size:
            raise GraphValidationError("duplicate undirected edge")
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(n, -1)
        if features.shape[0] != n:
            raise GraphValidationError("feature matrix row count must equal num_nodes")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != n:
            raise GraphValidationError("labels length must equal num_nodes")
        if np.any(labels < UNLABELED):
            raise GraphValidationError("labels must be class indices or -1")
        masks = []
        for name in ("train_mask", "val_mask", "test_mask"):
            m = np.asarray(getattr(self, name), dtype=bool).reshape(-1)
            if m.shape[0] != n:
                raise GraphValidationError(f"{name} length must equal num_nodes")
            m.setflags(write=False)
            masks.append(m)
        if np.any(masks[0] & masks[1]) or np.any(masks[0] & masks[2]) or np.any(masks[1] & masks[2]):
            raise GraphValidationError("masks must be pairwise disjoint")
        if any(np.any(labels[m] == UNLABELED) for m in masks):
            raise GraphValidationError("split masks may only contain labeled nodes")
        num_classes = int(self.num_classes)
        if num_classes < 0:
            num_classes = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
        if labels.size and labels.max() >= num_classes:
            raise GraphValidationError("label index must be < num_classes")

        for arr in (edges, features, labels):
            arr.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "num_nodes", n)
        set_(self, "edges", edges)
        set_(self, "features", features)
        set_(self, "labels", labels)
        set_(self, "train_mask", masks[0])
        set_(self, "val_mask", masks[1])
        set_(self, "test_mask", masks[2])
        set_(self, "num_classes", num_classes)
        set_(self, "_src", edges[:, 0].copy())
        set_(self, "_dst", edges[:, 1].copy())

    @classmethod
    def from_edges(cls, num_nodes, edges, features=None, labels=None, num_classes=-1):
        """Build a graph with empty split masks; features default to ones."""
        n = int(num_nodes)
        if features is None:
            features = np.ones((n, 1))
        if labels is None:
            labels = np.full(n, UNLABELED)
        empty = np.zeros(n, dtype=bool)
        return cls(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), features, labels,
                   empty, empty, empty, num_classes)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges.tolist():
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def dense_adjacency(self, edge_keep=None) -> np.ndarray:
        """Dense ``A' + I`` over kept edges (small graphs, tests, oracles)."""
        a = np.eye(self.num_nodes)
        e = self.edges if edge_keep is None else self.edges[np.asarray(edge_keep, bool)]
        a[e[:, 0], e[:, 1]] = 1.0
        a[e[:, 1], e[:, 0]] = 1.0
        return a


def propagate(x: np.ndarray, src: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    """One product ``(A + I) x`` for the undirected edge list ``(src, dst)``."""
    out = x + np.bincount(src, weights=x[dst], minlength=n)
    out += np.bincount(dst, weights=x[src], minlength=n)
    return out


def adjacency_power_apply(graph: Graph, x: np.ndarray, k: int, edge_keep=None) -> np.ndarray:
    """``(A'^k x)`` where ``A'`` is the kept-edge adjacency plus identity."""
    if k < 1:
        raise ValueError("k must be >= 1")
    src, dst = graph._src, graph._dst
    if edge_keep is not None:
        keep = np.asarray(edge_keep, dtype=bool)
        src, dst = src[keep], dst[keep]
    y = np.asarray(x, dtype=np.float64)
    for _ in range(k):
        y = propagate(y, src, dst, graph.num_nodes)
    return y


def adjacency_power_row_sums(graph: Graph, edge_keep=None, k: int = 2) -> np.ndarray:
    """Row sums ``(A'^k 1)_i``: the number of length-<=k message walks into node i.

    Counts are integers held in float64, exact while below 2**53.
    ``edge_keep=None`` keeps every edge. Ã^k is never materialized.
    """
    return adjacency_power_apply(graph, np.ones(graph.num_nodes), k, edge_keep)


@dataclass(frozen=True, eq=False)
class PropagationCache:
    """Original-graph message counts ``(Ã^k 1)_i``, shared by every chain state."""

    graph: Graph
    k: int = 2
    base_row_counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        counts = adjacency_power_row_sums(self.graph, None, self.k)
        counts.setflags(write=False)
        object.__setattr__(self, "base_row_counts", counts)


def ego_change_ratios(graph: Graph, edge_keep, node_keep, cache: PropagationCache,
                      *, edges: bool = True, nodes: bool = True):
    """Per-node ego-graph change ratios for edges and nodes.

    The edge ratio uses the kept-edge adjacency; the node ratio propagates the
    node mask over the original adjacency. A disabled side returns zeros.

    Returns
    -------
    ego_delta_e, ego_delta_v : ndarray of shape (num_nodes,)
    """
    if cache.graph is not graph:
        raise ValueError("propagation cache was built for a different graph")
    base = cache.base_row_counts
    edge_keep = np.asarray(edge_keep, dtype=bool)
    node_keep = np.asarray(node_keep, dtype=bool)
    if edges and not edge_keep.all():
        kept = adjacency_power_row_sums(graph, edge_keep, cache.k)
        ego_e = np.clip(1.0 - kept / base, 0.0, 1.0)
    else:
        ego_e = np.zeros(graph.num_nodes)
    if nodes and not node_keep.all():
        m = node_keep.astype(np.float64)
        ego_v = np.clip(1.0 - adjacency_power_apply(graph, m, cache.k) / base, 0.0, 1.0)
    else:
        ego_v = np.zeros(graph.num_nodes)
    return ego_e, ego_v


def full_change_ratios(edge_keep, node_keep):
    """Full-graph ratios ``1 - |E'|/|E|`` and ``1 - |V'|/|V|`` (0 for empty sets)."""
    edge_keep = np.asarray(edge_keep, dtype=bool)
    node_keep = np.asarray(node_keep, dtype=bool)
    m, n = edge_keep.size, node_keep.size
    de = (m - int(edge_keep.sum())) / m if m else 0.0
    dv = (n - int(node_keep.sum())) / n if n else 0.0
    return de, dv


@dataclass(frozen=True, eq=False)
class AugmentationState:
    """One state of the augmentation chain.

    Drop counts are stored as integers so the full-graph ratios always lie
    exactly on their grids ``{0, 1/N, ..., 1}``.
    """

    edge_keep: np.ndarray
    node_keep: np.ndarray
    n_drop_e: int
    n_drop_v: int
    ego_delta_e: np.ndarray
    ego_delta_v: np.ndarray

    @property
    def delta_e(self) -> float:
        m = self.edge_keep.size
        return self.n_drop_e / m if m else 0.0

    @property
    def delta_v(self) -> float:
        n = self.node_keep.size
        return self.n_drop_v / n if n else 0.0

    def edge_bitmask(self) -> int:
        """Kept edges as an integer bitmask; bit j is edge j."""
        m = self.edge_keep.size
        if m <= 62:
            return int(self.edge_keep @ (np.int64(1) << np.arange(m, dtype=np.int64)))
        return sum(1 << int(j) for j in np.flatnonzero(self.edge_keep))

    def is_identity(self) -> bool:
        return self.n_drop_e == 0 and self.n_drop_v == 0


def make_state(graph: Graph, edge_keep, node_keep, cache: PropagationCache,
               *, edges: bool = True, nodes: bool = True) -> AugmentationState:
    edge_keep = np.array(edge_keep, dtype=bool)
    node_keep = np.array(node_keep, dtype=bool)
    ego_e, ego_v = ego_change_ratios(graph, edge_keep, node_keep, cache, edges=edges, nodes=nodes)
    for a in (edge_keep, node_keep, ego_e, ego_v):
        a.setflags(write=False)
    return AugmentationState(edge_keep, node_keep,
                             edge_keep.size - int(np.count_nonzero(edge_keep)),
                             node_keep.size - int(np.count_nonzero(node_keep)),
                             ego_e, ego_v)


def identity_state(graph: Graph, cache: PropagationCache) -> AugmentationState:
    """The original graph: every edge and node kept, all ratios zero."""
    return make_state(graph, np.ones(graph.num_edges, bool), np.ones(graph.num_nodes, bool), cache)


def ego_graph_extract(graph: Graph, center: int, k: int = 2) -> Graph:
    """Induced subgraph on the BFS ball of radius ``k`` around ``center``.

    Nodes are renumbered in increasing original index; features and labels
    follow their nodes, masks are dropped.
    """
    if not 0 <= center < graph.num_nodes:
        raise ValueError("center out of range")
    adj = graph.neighbors()
    dist = {center: 0}
    queue = deque([center])
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    nodes = np.array(sorted(dist), dtype=np.int64)
    index = -np.ones(graph.num_nodes, dtype=np.int64)
    index[nodes] = np.arange(nodes.size)
    e = graph.edges
    inside = (index[e[:, 0]] >= 0) & (index[e[:, 1]] >= 0)
    sub_edges = index[e[inside]]
    return Graph.from_edges(nodes.size, sub_edges, graph.features[nodes], graph.labels[nodes],
                            graph.num_classes)
