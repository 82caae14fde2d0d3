"""Metropolis-Hastings chain over augmented subgraphs."""
from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .distributions import (
    EntropyVector,
    GridProposal,
    ProposalParams,
    Target,
    TargetParams,
)
from .graph import AugmentationState, Graph, PropagationCache, identity_state, make_state

__all__ = [
    "ChainConfig",
    "ChainStreams",
    "TraceRecord",
    "ChainTrace",
    "MHInvariantError",
    "MHChain",
    "propose",
    "acceptance_terms",
    "log_acceptance",
    "run_chain",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("step", "delta_e", "delta_v", "log_p", "log_q_fwd", "log_q_rev", "log_alpha", "accepted")


class MHInvariantError(RuntimeError):
    """A log density or acceptance term came out non-finite."""


@dataclass(frozen=True)
class ChainConfig:
    """Chain settings.

    ``num_samples``, when set, stops the chain after that many post-burn-in
    samples instead of after ``max_accepted`` acceptances.
    """

    seed: int = 0
    burn_in: int = 100
    max_accepted: int = 1000
    num_samples: int | None = None
    edge_aug: bool = True
    node_aug: bool = True
    target: TargetParams = field(default_factory=TargetParams)
    proposal: ProposalParams = field(default_factory=ProposalParams)
    k: int = 2

    def __post_init__(self):
        if not (self.edge_aug or self.node_aug):
            raise ValueError("at least one of edge_aug / node_aug must be enabled")
        if self.burn_in < 0 or self.max_accepted < 0:
            raise ValueError("burn_in and max_accepted must be >= 0")
        if self.num_samples is not None and self.num_samples < 0:
            raise ValueError("num_samples must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


class ChainStreams:
    """Independent generators per random decision.

    Each decision (edge ratio, node ratio, edge subset, node subset, accept)
    owns a child of the chain seed, so switching one side off leaves the
    other streams untouched.
    """

    NAMES = ("edge_ratio", "node_ratio", "edge_subset", "node_subset", "accept")

    def __init__(self, seed: int):
        children = np.random.SeedSequence(seed).spawn(len(self.NAMES))
        for name, child in zip(self.NAMES, children):
            setattr(self, name, np.random.Generator(np.random.PCG64(child)))


class TraceRecord(NamedTuple):
    step: int
    delta_e: float
    delta_v: float
    log_p: float
    log_q_fwd: float
    log_q_rev: float
    log_alpha: float
    accepted: bool


class ChainTrace:
    """Column store of per-step records; ``log_p`` is the candidate's."""

    def __init__(self):
        self._cols = {name: array("d") for name in TRACE_COLUMNS[1:-1]}
        self._step = array("q")
        self._accepted = array("b")

    def append(self, rec: TraceRecord):
        self._step.append(rec.step)
        for name in TRACE_COLUMNS[1:-1]:
            self._cols[name].append(getattr(rec, name))
        self._accepted.append(1 if rec.accepted else 0)

    def __len__(self):
        return len(self._step)

    def __iter__(self):
        cols = [self._cols[name] for name in TRACE_COLUMNS[1:-1]]
        for i, step in enumerate(self._step):
            yield TraceRecord(step, *(c[i] for c in cols), bool(self._accepted[i]))

    def column(self, name: str) -> np.ndarray:
        if name == "step":
            return np.frombuffer(self._step, dtype=np.int64).copy()
        if name == "accepted":
            return np.frombuffer(self._accepted, dtype=np.int8).astype(bool)
        return np.frombuffer(self._cols[name], dtype=np.float64).copy()

    @property
    def num_accepted(self) -> int:
        return int(sum(self._accepted))

    @property
    def acceptance_rate(self) -> float:
        return self.num_accepted / len(self) if len(self) else 0.0

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self:
                w.writerow([r.step, repr(r.delta_e), repr(r.delta_v), repr(r.log_p), repr(r.log_q_fwd),
                            repr(r.log_q_rev), repr(r.log_alpha), int(r.accepted)])


def _uniform_keep(size: int, n_keep: int, rng: np.random.Generator) -> np.ndarray:
    keep = np.zeros(size, dtype=bool)
    if n_keep == size:
        keep[:] = True
    elif n_keep:
        keep[rng.choice(size, n_keep, replace=False)] = True
    return keep


def propose(current: AugmentationState, graph: Graph, cache: PropagationCache, cfg: ChainConfig,
            streams: ChainStreams, grids: tuple[GridProposal, GridProposal]) -> AugmentationState:
    """Draw a candidate: new ratios around the current ones, then uniform subsets.

    Subsets are drawn from the original graph, not edited from the current
    one, so the proposal depends on the current state only via its ratios.
    """
    m, n = graph.num_edges, graph.num_nodes
    if cfg.edge_aug:
        drop_e = grids[0].sample(current.n_drop_e, streams.edge_ratio)
        edge_keep = _uniform_keep(m, m - drop_e, streams.edge_subset)
    else:
        edge_keep = np.ones(m, dtype=bool)
    if cfg.node_aug:
        drop_v = grids[1].sample(current.n_drop_v, streams.node_ratio)
        node_keep = _uniform_keep(n, n - drop_v, streams.node_subset)
    else:
        node_keep = np.ones(n, dtype=bool)
    return make_state(graph, edge_keep, node_keep, cache, edges=cfg.edge_aug, nodes=cfg.node_aug)


def _log_q(to: AugmentationState, frm: AugmentationState, grids, edges: bool, nodes: bool) -> float:
    total = 0.0
    if edges:
        g = grids[0]
        total += g.logpmf_row(frm.n_drop_e)[to.n_drop_e] - g.log_counts[to.n_drop_e]
    if nodes:
        g = grids[1]
        total += g.logpmf_row(frm.n_drop_v)[to.n_drop_v] - g.log_counts[to.n_drop_v]
    return float(total)


def acceptance_terms(current, candidate, target: Target, grids, *, edges=True, nodes=True,
                     log_p_current=None, log_p_candidate=None):
    """Return ``(log_p_candidate, log_q_fwd, log_q_rev, log_alpha)``."""
    lp_cur = target(current) if log_p_current is None else log_p_current
    lp_cand = target(candidate) if log_p_candidate is None else log_p_candidate
    lq_fwd = _log_q(candidate, current, grids, edges, nodes)
    lq_rev = _log_q(current, candidate, grids, edges, nodes)
    x = (lp_cand + lq_rev) - (lp_cur + lq_fwd)
    if not math.isfinite(x):
        raise MHInvariantError(
            f"non-finite acceptance log-ratio (log_p {lp_cur}->{lp_cand}, log_q {lq_fwd}/{lq_rev})")
    return lp_cand, lq_fwd, lq_rev, min(0.0, x)


def log_acceptance(current, candidate, target: Target, proposal: ProposalParams, *,
                   edges=True, nodes=True, grids=None) -> float:
    """``min(0, log P(c) + log Q(x|c) - log P(x) - log Q(c|x))``."""
    if grids is None:
        grids = (GridProposal(target.num_edges, proposal.sigma_delta_e),
                 GridProposal(target.num_nodes, proposal.sigma_delta_v))
    return acceptance_terms(current, candidate, target, grids, edges=edges, nodes=nodes)[3]


class MHChain:
    """A single sequential chain, started at the original graph."""

    def __init__(self, graph: Graph, cfg: ChainConfig, entropy: EntropyVector | None = None,
                 cache: PropagationCache | None = None):
        self.graph = graph
        self.cfg = cfg
        self.cache = cache if cache is not None and cache.k == cfg.k else PropagationCache(graph, cfg.k)
        if entropy is None:
            entropy = EntropyVector.uniform(graph.num_nodes, max(graph.num_classes, 1))
        self.target = Target(cfg.target, graph.num_edges, graph.num_nodes, entropy,
                             edges=cfg.edge_aug, nodes=cfg.node_aug)
        self.grids = (GridProposal(graph.num_edges, cfg.proposal.sigma_delta_e),
                      GridProposal(graph.num_nodes, cfg.proposal.sigma_delta_v))
        self.streams = ChainStreams(cfg.seed)
        self.state = identity_state(graph, self.cache)
        self.log_p = self.target(self.state)
        self.steps = 0
        self.accepted = 0

    def set_entropy(self, entropy: EntropyVector):
        """Swap the entropy vector; the current state's density is re-evaluated."""
        self.target.set_entropy(entropy)
        self.log_p = self.target(self.state)

    def step(self) -> TraceRecord:
        cfg = self.cfg
        cand = propose(self.state, self.graph, self.cache, cfg, self.streams, self.grids)
        lp_cand, lq_fwd, lq_rev, log_alpha = acceptance_terms(
            self.state, cand, self.target, self.grids, edges=cfg.edge_aug, nodes=cfg.node_aug,
            log_p_current=self.log_p)
        u = self.streams.accept.random()
        accepted = bool(math.log(u) < log_alpha) if u > 0 else True
        rec = TraceRecord(self.steps, cand.delta_e, cand.delta_v, lp_cand, lq_fwd, lq_rev,
                          log_alpha, accepted)
        if accepted:
            self.state = cand
            self.log_p = lp_cand
            self.accepted += 1
        self.steps += 1
        return rec


def run_chain(graph: Graph, cfg: ChainConfig,
              sink: Callable[[int, AugmentationState], None] | None = None,
              entropy: EntropyVector | None = None) -> ChainTrace:
    """Run burn-in, then stream every post-burn-in state to ``sink``.

    Rejections re-emit the current state. The trace holds every step,
    burn-in included.
    """
    chain = MHChain(graph, cfg, entropy)
    trace = ChainTrace()
    for _ in range(cfg.burn_in):
        trace.append(chain.step())
    emitted = accepted = 0
    while True:
        if cfg.num_samples is not None:
            if emitted >= cfg.num_samples:
                break
        elif accepted >= cfg.max_accepted:
            break
        rec = chain.step()
        trace.append(rec)
        accepted += rec.accepted
        if sink is not None:
            sink(emitted, chain.state)
        emitted += 1
    return trace
