"""Target and proposal distributions over augmented subgraphs.

The target is unnormalized and evaluated in log space:

    log P = l1 * sum_i -(ego_e[i] - mu_e)^2 / (2 s_e(eps_i)^2) - l2 * ln C(|E|, n_drop_e)
          + l3 * sum_i -(ego_v[i] - mu_v)^2 / (2 s_v(eps_i)^2) - l4 * ln C(|V|, n_drop_v)

where ``s(eps) = alpha * eps + beta`` adapts the per-node spread to the
model's prediction entropy.

The proposal draws the next change ratio from a Gaussian centred on the
current ratio, discretized on the grid ``{0, 1/N, ..., 1}`` and normalized
exactly over that grid, then picks a uniform subset of that size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, logsumexp

__all__ = [
    "TargetParams",
    "ProposalParams",
    "EntropyVector",
    "log_binomial",
    "sigma_of_entropy",
    "Target",
    "log_target",
    "GridProposal",
    "proposal_logpmf",
    "log_proposal",
]

_GRID_TOL = 1e-9


def log_binomial(n, k):
    """Natural log of the binomial coefficient ``C(n, k)``.

    Evaluated as ``-ln(n + 1) - ln B(n - k + 1, k + 1)``; the beta-function
    form keeps full relative precision for large ``n`` where a difference of
    log-gammas would cancel.

    Raises
    ------
    ValueError
        If ``k < 0``, ``n < 0`` or ``k > n``.
    """
    n_arr = np.asarray(n, dtype=np.float64)
    k_arr = np.asarray(k, dtype=np.float64)
    if np.any(n_arr < 0) or np.any(k_arr < 0) or np.any(k_arr > n_arr):
        raise ValueError(f"log_binomial requires 0 <= k <= n, got n={n}, k={k}")
    out = -np.log1p(n_arr) - betaln(n_arr - k_arr + 1.0, k_arr + 1.0)
    # exact zeros for the trivial ends
    out = np.where((k_arr == 0) | (k_arr == n_arr), 0.0, out)
    return float(out) if out.ndim == 0 else out


def sigma_of_entropy(eps, coeffs, floor=1e-3):
    """``max(alpha * eps + beta, floor)`` elementwise."""
    alpha, beta = coeffs
    return np.maximum(alpha * np.asarray(eps, dtype=np.float64) + beta, floor)


@dataclass(frozen=True)
class TargetParams:
    """Parameters of the target distribution.

    ``lam`` holds the four exponents (edge Gaussian, edge normalizer,
    node Gaussian, node normalizer).
    """

    mu_e: float = 0.3
    mu_v: float = 0.1
    sigma_e_coeffs: tuple[float, float] = (0.5, 0.05)
    sigma_v_coeffs: tuple[float, float] = (0.5, 0.05)
    lam: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    sigma_floor: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "sigma_e_coeffs", tuple(float(c) for c in self.sigma_e_coeffs))
        object.__setattr__(self, "sigma_v_coeffs", tuple(float(c) for c in self.sigma_v_coeffs))
        object.__setattr__(self, "lam", tuple(float(x) for x in self.lam))
        if len(self.sigma_e_coeffs) != 2 or len(self.sigma_v_coeffs) != 2:
            raise ValueError("sigma coefficients must be (alpha, beta) pairs")
        if len(self.lam) != 4:
            raise ValueError("lam must hold four exponents")
        if any(x < 0 for x in self.lam):
            raise ValueError("lam exponents must be nonnegative")
        if self.sigma_e_coeffs[1] <= 0 or self.sigma_v_coeffs[1] <= 0:
            raise ValueError("sigma intercept beta must be > 0")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be > 0")


@dataclass(frozen=True)
class ProposalParams:
    sigma_delta_e: float = 0.05
    sigma_delta_v: float = 0.05

    def __post_init__(self):
        if not (self.sigma_delta_e > 0 and self.sigma_delta_v > 0):
            raise ValueError("proposal sigmas must be > 0")


@dataclass(frozen=True, eq=False)
class EntropyVector:
    """Per-node prediction entropy feeding the adaptive target spread."""

    values: np.ndarray
    source: str = "model"

    @classmethod
    def uniform(cls, num_nodes: int, num_classes: int) -> "EntropyVector":
        """Entropy of a uniform prediction, ``ln C``, at every node."""
        return cls(np.full(num_nodes, np.log(max(num_classes, 1))), "uniform-init")

    @classmethod
    def from_predictions(cls, probs: np.ndarray) -> "EntropyVector":
        p = np.clip(probs, 1e-12, 1.0)
        h = -(probs * np.log(p)).sum(axis=1)
        return cls(np.clip(h, 0.0, np.log(max(probs.shape[1], 1))), "model")


class Target:
    """Log target density bound to a graph size and an entropy vector.

    ``edges`` / ``nodes`` switch the corresponding factor off entirely (a
    disabled side contributes nothing, not a constant).
    """

    def __init__(self, params: TargetParams, num_edges: int, num_nodes: int,
                 entropy: EntropyVector | None = None, *, edges: bool = True, nodes: bool = True):
        self.params = params
        self.num_edges = int(num_edges)
        self.num_nodes = int(num_nodes)
        self.edges = edges
        self.nodes = nodes
        self._lnc_e = log_binomial(self.num_edges, np.arange(self.num_edges + 1))
        self._lnc_v = log_binomial(self.num_nodes, np.arange(self.num_nodes + 1))
        self._lnc_e = np.atleast_1d(self._lnc_e)
        self._lnc_v = np.atleast_1d(self._lnc_v)
        self.set_entropy(entropy if entropy is not None else EntropyVector.uniform(num_nodes, 1))

    def set_entropy(self, entropy: EntropyVector):
        eps = np.asarray(entropy.values, dtype=np.float64)
        if eps.shape != (self.num_nodes,):
            raise ValueError("entropy vector must have one entry per node")
        p = self.params
        self.entropy = entropy
        self._half_prec_e = 0.5 / sigma_of_entropy(eps, p.sigma_e_coeffs, p.sigma_floor) ** 2
        self._half_prec_v = 0.5 / sigma_of_entropy(eps, p.sigma_v_coeffs, p.sigma_floor) ** 2

    def __call__(self, state) -> float:
        return self.evaluate(state.ego_delta_e, state.ego_delta_v, state.n_drop_e, state.n_drop_v)

    def evaluate(self, ego_e, ego_v, n_drop_e: int, n_drop_v: int) -> float:
        p = self.params
        l1, l2, l3, l4 = p.lam
        total = 0.0
        if self.edges:
            d = ego_e - p.mu_e
            total -= l1 * float(np.dot(d * d, self._half_prec_e))
            total -= l2 * self._lnc_e[n_drop_e]
        if self.nodes:
            d = ego_v - p.mu_v
            total -= l3 * float(np.dot(d * d, self._half_prec_v))
            total -= l4 * self._lnc_v[n_drop_v]
        return total


    def evaluate_edges_batch(self, ego_e: np.ndarray, n_drop_e: np.ndarray) -> np.ndarray:
        """Edge factor for a batch of states: ``ego_e`` is (S, n), ``n_drop_e`` (S,)."""
        l1, l2 = self.params.lam[:2]
        d = ego_e - self.params.mu_e
        return -l1 * ((d * d) @ self._half_prec_e) - l2 * self._lnc_e[n_drop_e]


def log_target(state, params: TargetParams, entropy: EntropyVector, num_edges: int,
               num_nodes: int, *, edges: bool = True, nodes: bool = True) -> float:
    """Unnormalized log target of one augmentation state."""
    return Target(params, num_edges, num_nodes, entropy, edges=edges, nodes=nodes)(state)


def _grid_index(ratio: float, n: int) -> int:
    if n == 0:
        if ratio != 0:
            raise ValueError(f"ratio {ratio!r} is not on the empty grid {{0}}")
        return 0
    x = ratio * n
    j = int(round(x))
    if abs(x - j) > _GRID_TOL or not 0 <= j <= n:
        raise ValueError(f"ratio {ratio!r} is not on the grid {{0, 1/{n}, ..., 1}}")
    return j


class GridProposal:
    """Discretized truncated Gaussian over drop counts ``0..n``.

    ``pmf(j | i)`` is proportional to the standard normal density at
    ``(j - i) / (n * sigma)`` and normalized over the grid. Rows are built
    lazily and cached.
    """

    def __init__(self, n: int, sigma: float):
        if not sigma > 0:
            raise ValueError("sigma must be > 0")
        self.n = int(n)
        self.sigma = float(sigma)
        self._grid = np.arange(self.n + 1, dtype=np.float64)
        self._rows: dict[int, np.ndarray] = {}
        self._cdfs: dict[int, np.ndarray] = {}
        self.log_counts = np.atleast_1d(log_binomial(self.n, np.arange(self.n + 1)))
        self.log_counts.setflags(write=False)

    def logpmf_row(self, i: int) -> np.ndarray:
        row = self._rows.get(i)
        if row is None:
            scale = self.n * self.sigma if self.n else 1.0
            z = (self._grid - i) / scale
            logits = -0.5 * z * z
            row = logits - logsumexp(logits)
            row.setflags(write=False)
            self._rows[i] = row
        return row

    def logpmf(self, j: int, i: int) -> float:
        return float(self.logpmf_row(i)[j])

    def sample(self, i: int, rng: np.random.Generator) -> int:
        cdf = self._cdfs.get(i)
        if cdf is None:
            cdf = np.cumsum(np.exp(self.logpmf_row(i)))
            self._cdfs[i] = cdf
        j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(j, self.n)


def proposal_logpmf(to_ratio: float, from_ratio: float, sigma: float, n: int) -> float:
    """Log pmf of moving to ``to_ratio`` from ``from_ratio`` on the ``1/n`` grid."""
    return GridProposal(n, sigma).logpmf(_grid_index(to_ratio, n), _grid_index(from_ratio, n))


def log_proposal(candidate, current, params: ProposalParams, num_edges: int, num_nodes: int,
                 *, edges: bool = True, nodes: bool = True, grids=None) -> float:
    """``log Q(candidate | current)`` for ratio pairs ``(delta_e, delta_v)``.

    The ratio is drawn from the grid pmf, then the subset uniformly among the
    ``C(N, N * delta)`` subsets of that size; a disabled side contributes 0.
    ``grids`` may pass prebuilt ``(GridProposal, GridProposal)`` to skip
    rebuilding rows.
    """
    if grids is None:
        grids = (GridProposal(num_edges, params.sigma_delta_e),
                 GridProposal(num_nodes, params.sigma_delta_v))
    total = 0.0
    if edges:
        j = _grid_index(candidate[0], num_edges)
        i = _grid_index(current[0], num_edges)
        total += grids[0].logpmf(j, i) - grids[0].log_counts[j]
    if nodes:
        j = _grid_index(candidate[1], num_nodes)
        i = _grid_index(current[1], num_nodes)
        total += grids[1].logpmf(j, i) - grids[1].log_counts[j]
    return total
