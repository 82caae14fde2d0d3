"""Metropolis-Hastings sampling of augmented subgraphs for GNN training."""
from .distributions import (
    EntropyVector,
    GridProposal,
    ProposalParams,
    Target,
    TargetParams,
    log_binomial,
    log_proposal,
    log_target,
)
from .graph import (
    AugmentationState,
    Graph,
    GraphValidationError,
    PropagationCache,
    adjacency_power_row_sums,
    ego_change_ratios,
    ego_graph_extract,
    identity_state,
    make_state,
)
from .sampler import ChainConfig, ChainTrace, MHChain, MHInvariantError, log_acceptance, run_chain

__version__ = "0.1.0"

__all__ = [
    "AugmentationState",
    "ChainConfig",
    "ChainTrace",
    "EntropyVector",
    "Graph",
    "GraphValidationError",
    "GridProposal",
    "MHChain",
    "MHInvariantError",
    "PropagationCache",
    "ProposalParams",
    "Target",
    "TargetParams",
    "adjacency_power_row_sums",
    "ego_change_ratios",
    "ego_graph_extract",
    "identity_state",
    "log_acceptance",
    "log_binomial",
    "log_proposal",
    "log_target",
    "make_state",
    "run_chain",
]
