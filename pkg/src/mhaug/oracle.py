"""Brute-force ground truth for the augmentation chain on tiny graphs.

Every edge subset of the graph is enumerated (node augmentation off), the
target is normalized exactly, and the full transition kernel is built so
that stationarity and detailed balance can be checked to machine precision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .distributions import EntropyVector, GridProposal, ProposalParams, Target, TargetParams
from .graph import Graph, PropagationCache

__all__ = [
    "MAX_ENUM_EDGES",
    "MAX_KERNEL_EDGES",
    "OracleSizeError",
    "StateTable",
    "enumerate_target",
    "exact_kernel",
    "detailed_balance_violation",
    "stationarity_violation",
    "empirical_distribution",
    "tv_distance",
    "change_ratio_histogram",
    "exact_ratio_distribution",
    "exact_edge_drop_marginals",
    "StateRecorder",
]

MAX_ENUM_EDGES = 20
MAX_KERNEL_EDGES = 12
_CHUNK = 1 << 15


class OracleSizeError(ValueError):
    """The graph is too large for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class StateTable:
    """All ``2**m`` edge-subset states; row ``b`` is the subset with bitmask ``b``.

    Attributes
    ----------
    log_unnorm : ndarray
        Unnormalized log target per state.
    probs : ndarray
        Exactly normalized target.
    n_drop : ndarray
        Dropped-edge count per state.
    """

    num_edges: int
    log_unnorm: np.ndarray
    probs: np.ndarray
    n_drop: np.ndarray

    @property
    def num_states(self) -> int:
        return self.probs.size

    def index(self, edge_keep) -> int:
        keep = np.asarray(edge_keep, dtype=bool)
        return int(keep @ (np.int64(1) << np.arange(keep.size, dtype=np.int64)))

    def keep_matrix(self) -> np.ndarray:
        return _keep_matrix(np.arange(self.num_states), self.num_edges)


def _keep_matrix(bitmasks: np.ndarray, m: int) -> np.ndarray:
    return ((bitmasks[:, None] >> np.arange(m)) & 1).astype(bool)


def enumerate_target(graph: Graph, params: TargetParams, entropy: EntropyVector | None = None,
                     k: int = 2) -> StateTable:
    """Evaluate the edge-only target on every edge subset and normalize it."""
    m, n = graph.num_edges, graph.num_nodes
    if m > MAX_ENUM_EDGES:
        raise OracleSizeError(f"{m} edges exceeds the enumeration limit of {MAX_ENUM_EDGES}")
    if entropy is None:
        entropy = EntropyVector.uniform(n, max(graph.num_classes, 1))
    target = Target(params, m, n, entropy, edges=True, nodes=False)
    base = PropagationCache(graph, k).base_row_counts
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    inc_src = np.zeros((m, n))
    inc_dst = np.zeros((m, n))
    inc_src[np.arange(m), src] = 1.0
    inc_dst[np.arange(m), dst] = 1.0

    num_states = 1 << m
    log_unnorm = np.empty(num_states)
    n_drop = np.empty(num_states, dtype=np.int64)
    for start in range(0, num_states, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, num_states), dtype=np.int64)
        keep = _keep_matrix(masks, m).astype(np.float64)
        y = np.ones((masks.size, n))
        for _ in range(k):
            y = y + (keep * y[:, dst]) @ inc_src + (keep * y[:, src]) @ inc_dst
        ego = np.clip(1.0 - y / base, 0.0, 1.0)
        drops = m - keep.sum(axis=1).astype(np.int64)
        n_drop[masks] = drops
        log_unnorm[masks] = target.evaluate_edges_batch(ego, drops)
    probs = np.exp(log_unnorm - logsumexp(log_unnorm))
    probs /= probs.sum()
    return StateTable(m, log_unnorm, probs, n_drop)


def _log_q_matrix(table: StateTable, sigma: float) -> np.ndarray:
    """``log Q(y | x)`` for every state pair, edge-only proposal."""
    grid = GridProposal(table.num_edges, sigma)
    lnc = grid.log_counts
    rows = np.stack([grid.logpmf_row(i) for i in range(table.num_edges + 1)])
    nd = table.n_drop
    return rows[nd[:, None], nd[None, :]] - lnc[nd][None, :]


def exact_kernel(table: StateTable, proposal: ProposalParams) -> np.ndarray:
    """Full MH transition matrix ``K[x, y]`` over the enumerated states.

    Off-diagonal entries are ``Q(y|x) * min(1, P(y)Q(x|y) / (P(x)Q(y|x)))``;
    the diagonal collects the rejection mass and self-proposals.
    """
    if table.num_edges > MAX_KERNEL_EDGES:
        raise OracleSizeError(f"{table.num_edges} edges exceeds the kernel limit of {MAX_KERNEL_EDGES}")
    lq = _log_q_matrix(table, proposal.sigma_delta_e)
    lp = table.log_unnorm
    log_k = np.minimum(lq, lp[None, :] + lq.T - lp[:, None])
    kernel = np.exp(log_k)
    np.fill_diagonal(kernel, 0.0)
    kernel[np.diag_indices_from(kernel)] = 1.0 - kernel.sum(axis=1)
    return kernel


def detailed_balance_violation(probs: np.ndarray, kernel: np.ndarray) -> float:
    """``max |pi_x K_xy - pi_y K_yx|``."""
    flow = probs[:, None] * kernel
    return float(np.max(np.abs(flow - flow.T)))


def stationarity_violation(probs: np.ndarray, kernel: np.ndarray) -> float:
    """``||pi^T K - pi^T||_inf``."""
    return float(np.max(np.abs(probs @ kernel - probs)))


def empirical_distribution(bitmasks, num_edges: int) -> np.ndarray:
    """State frequencies over the ``2**num_edges`` edge subsets."""
    b = np.asarray(bitmasks, dtype=np.int64)
    counts = np.bincount(b, minlength=1 << num_edges).astype(np.float64)
    total = counts.sum()
    return counts / total if total else counts


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def change_ratio_histogram(n_drops, grid_size: int) -> np.ndarray:
    """Counts of samples per grid ratio ``j / grid_size``, ``j = 0..grid_size``."""
    return np.bincount(np.asarray(n_drops, dtype=np.int64), minlength=grid_size + 1)


def exact_ratio_distribution(table: StateTable) -> np.ndarray:
    """Exact target mass on each full-graph change ratio."""
    return np.bincount(table.n_drop, weights=table.probs, minlength=table.num_edges + 1)


def exact_edge_drop_marginals(table: StateTable) -> np.ndarray:
    """Exact probability that each edge is dropped."""
    keep = table.keep_matrix()
    return table.probs @ (~keep)


class StateRecorder:
    """Chain sink accumulating what the oracle checks and CLI reports need."""

    def __init__(self, num_edges: int, num_nodes: int, keep_bitmasks: bool = True):
        self.num_edges = num_edges
        self.num_nodes = num_nodes
        self.keep_bitmasks = keep_bitmasks and num_edges <= 62
        self._weights = np.int64(1) << np.arange(min(num_edges, 62), dtype=np.int64)
        self.bitmasks: list[int] = []
        self.n_drop_e: list[int] = []
        self.n_drop_v: list[int] = []
        self.mean_ego_e: list[float] = []
        self.edge_drop_counts = np.zeros(num_edges, dtype=np.int64)
        self.node_drop_counts = np.zeros(num_nodes, dtype=np.int64)
        self.count = 0

    def __call__(self, index, state):
        if self.keep_bitmasks:
            self.bitmasks.append(int(state.edge_keep @ self._weights))
        self.n_drop_e.append(state.n_drop_e)
        self.n_drop_v.append(state.n_drop_v)
        self.mean_ego_e.append(float(state.ego_delta_e.mean()) if self.num_nodes else 0.0)
        if state.n_drop_e:
            self.edge_drop_counts += ~state.edge_keep
        if state.n_drop_v:
            self.node_drop_counts += ~state.node_keep
        self.count += 1

    def edge_drop_frequencies(self) -> np.ndarray:
        return self.edge_drop_counts / self.count if self.count else np.zeros(self.num_edges)

    def node_drop_frequencies(self) -> np.ndarray:
        return self.node_drop_counts / self.count if self.count else np.zeros(self.num_nodes)

    def delta_e(self) -> np.ndarray:
        m = self.num_edges
        return np.asarray(self.n_drop_e, dtype=np.float64) / m if m else np.zeros(self.count)
