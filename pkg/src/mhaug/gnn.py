"""Two-layer GCN with hand-derived gradients and the consistency-training loop.

The training objective combines three losses over chain samples:

* supervised cross-entropy on the newest augmented sample,
* KL consistency between predictions on two consecutive samples
  (the older side is a fixed target by default),
* mean prediction entropy on the unaugmented graph.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .distributions import EntropyVector
from .graph import AugmentationState, Graph, PropagationCache, identity_state
from .sampler import ChainConfig, MHChain

__all__ = [
    "GcnModel",
    "LossWeights",
    "ModelConfig",
    "AdamState",
    "Predictions",
    "normalized_adjacency",
    "forward",
    "loss_supervised",
    "loss_consistency",
    "loss_entropy",
    "objective",
    "backward",
    "accuracy",
    "EpochMetrics",
    "TrainResult",
    "train",
    "METRIC_COLUMNS",
]

PROB_FLOOR = 1e-12
_LOG_FLOOR = math.log(PROB_FLOOR)
METRIC_COLUMNS = ("epoch", "loss_s", "loss_u", "loss_h", "train_acc", "val_acc", "test_acc",
                  "chain_acceptance_rate")


@dataclass
class GcnModel:
    """Parameters of ``softmax(A relu(A X W1) W2)``."""

    W1: np.ndarray
    W2: np.ndarray

    @classmethod
    def init(cls, feature_dim: int, hidden: int, num_classes: int, rng: np.random.Generator):
        """Glorot-uniform initialization."""
        def glorot(fan_in, fan_out):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return cls(glorot(feature_dim, hidden), glorot(hidden, num_classes))

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "W2": self.W2}

    def copy(self) -> "GcnModel":
        return GcnModel(self.W1.copy(), self.W2.copy())

    def to_json(self) -> str:
        doc = {name: {"shape": list(w.shape), "data": [repr(float(x)) for x in w.ravel()]}
               for name, w in self.params().items()}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GcnModel":
        doc = json.loads(text)
        arrs = {k: np.array([float(x) for x in v["data"]]).reshape(v["shape"]) for k, v in doc.items()}
        return cls(arrs["W1"], arrs["W2"])


@dataclass(frozen=True)
class LossWeights:
    gamma1: float = 1.0
    gamma2: float = 1.0

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 5e-4
    epochs: int = 200
    seed: int = 0
    kl_stop_gradient: bool = True
    train_on_reject: bool = True

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 0:
            raise ValueError("hidden must be >= 1 and epochs >= 0")
        if not self.lr > 0 or not self.adam_eps > 0 or self.weight_decay < 0:
            raise ValueError("lr and adam_eps must be > 0, weight_decay >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam moments must lie in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


class AdamState:
    """Adam moments for a dict of parameters."""

    def __init__(self, params: dict[str, np.ndarray], lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """In-place parameter update."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, w in params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            w -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def normalized_adjacency(graph: Graph, edge_keep=None) -> sp.csr_matrix:
    """``D^-1/2 (A' + I) D^-1/2`` over kept edges."""
    e = graph.edges if edge_keep is None else graph.edges[np.asarray(edge_keep, dtype=bool)]
    n = graph.num_nodes
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class Predictions(NamedTuple):
    """Class probabilities plus the intermediates backward needs."""

    probs: np.ndarray
    log_probs: np.ndarray
    adj: sp.csr_matrix
    ax: np.ndarray
    z1: np.ndarray
    ar: np.ndarray


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(model: GcnModel, graph: Graph, state: AugmentationState | None = None,
            adj: sp.csr_matrix | None = None) -> Predictions:
    """Predictions under an augmentation state (``None`` = original graph).

    Masked nodes emit zero features, so their messages vanish while they
    still relay. ``adj`` may pass a prebuilt normalized adjacency.
    """
    if adj is None:
        adj = normalized_adjacency(graph, None if state is None else state.edge_keep)
    x = graph.features
    if state is not None and state.n_drop_v:
        x = x * state.node_keep[:, None]
    ax = adj @ x
    z1 = ax @ model.W1
    r = np.maximum(z1, 0.0)
    ar = adj @ r
    logp = _log_softmax(ar @ model.W2)
    probs = np.exp(logp)
    return Predictions(probs, np.maximum(logp, _LOG_FLOOR), adj, ax, z1, ar)


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Predictions) else np.asarray(p)


def _logs(p) -> np.ndarray:
    if isinstance(p, Predictions):
        return p.log_probs
    return np.log(np.maximum(np.asarray(p), PROB_FLOOR))


def loss_supervised(preds, labels, train_mask) -> float:
    """Mean ``-ln p[label]`` over the training nodes."""
    idx = np.flatnonzero(train_mask)
    if idx.size == 0:
        raise ValueError("supervised loss needs at least one training node")
    return float(-_logs(preds)[idx, np.asarray(labels)[idx]].mean())


def loss_consistency(preds_t, preds_t1) -> float:
    """Mean over nodes of ``KL(p_t || p_t1)``."""
    p = _probs(preds_t)
    kl = (p * (_logs(preds_t) - _logs(preds_t1))).sum(axis=1)
    return float(kl.mean())


def loss_entropy(preds) -> float:
    """Mean Shannon entropy of the node predictions."""
    return float(-(_probs(preds) * _logs(preds)).sum(axis=1).mean())


def _softmax_vjp(p: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Gradient wrt logits of ``sum_c p_c a_c``-shaped losses: ``p * (a - <p, a>)``."""
    return p * (a - (p * a).sum(axis=1, keepdims=True))


def backward(model: GcnModel, fwd: Predictions, dlogits: np.ndarray):
    """Gradients of a loss wrt ``W1`` and ``W2`` through one forward pass."""
    dW2 = fwd.ar.T @ dlogits
    dr = fwd.adj.T @ (dlogits @ model.W2.T)
    dz1 = dr * (fwd.z1 > 0)
    dW1 = fwd.ax.T @ dz1
    return dW1, dW2


class LossParts(NamedTuple):
    total: float
    loss_s: float
    loss_u: float
    loss_h: float


def objective(model: GcnModel, graph: Graph, state_t: AugmentationState | None,
              state_t1: AugmentationState | None, weights: LossWeights, *,
              kl_stop_gradient: bool = True, weight_decay: float = 0.0,
              target_probs: np.ndarray | None = None, original: Predictions | None = None,
              adj_original: sp.csr_matrix | None = None, with_grad: bool = True):
    """Total loss and its gradient for one consecutive pair of chain samples.

    Cross-entropy uses the newer sample ``state_t1``; the consistency term
    compares ``state_t`` to ``state_t1``; entropy uses the original graph.
    With ``kl_stop_gradient`` the ``state_t`` probabilities are a constant,
    optionally supplied as ``target_probs``.

    Returns
    -------
    parts : LossParts
    grads : dict or None
    """
    n = graph.num_nodes
    g1, g2 = weights.gamma1, weights.gamma2
    grads = {"W1": np.zeros_like(model.W1), "W2": np.zeros_like(model.W2)}

    def accumulate(fwd, dlogits):
        dW1, dW2 = backward(model, fwd, dlogits)
        grads["W1"] += dW1
        grads["W2"] += dW2

    f1 = forward(model, graph, state_t1,
                 adj_original if state_t1 is None or not state_t1.n_drop_e else None)
    idx = np.flatnonzero(graph.train_mask)
    if idx.size == 0:
        raise ValueError("supervised loss needs at least one training node")
    y = graph.labels[idx]
    loss_s = loss_supervised(f1, graph.labels, graph.train_mask)
    d1 = np.zeros_like(f1.probs)
    d1[idx] = f1.probs[idx]
    d1[idx, y] -= 1.0
    d1 /= idx.size

    loss_u = 0.0
    if g1 > 0:
        if kl_stop_gradient:
            if target_probs is None:
                target_probs = forward(model, graph, state_t,
                                       adj_original if state_t is None or not state_t.n_drop_e else None).probs
            p = target_probs
            logp = np.log(np.maximum(p, PROB_FLOOR))
            loss_u = float((p * (logp - f1.log_probs)).sum(axis=1).mean())
            d1 += g1 * (f1.probs - p) / n
        else:
            f0 = forward(model, graph, state_t,
                         adj_original if state_t is None or not state_t.n_drop_e else None)
            loss_u = loss_consistency(f0, f1)
            d1 += g1 * (f1.probs - f0.probs) / n
            if with_grad:
                accumulate(f0, g1 * _softmax_vjp(f0.probs, f0.log_probs - f1.log_probs) / n)
    if with_grad:
        accumulate(f1, d1)

    loss_h = 0.0
    if g2 > 0:
        fo = original if original is not None else forward(model, graph, None, adj_original)
        loss_h = loss_entropy(fo)
        if with_grad:
            accumulate(fo, -g2 * _softmax_vjp(fo.probs, fo.log_probs) / n)

    total = loss_s + g1 * loss_u + g2 * loss_h
    if weight_decay:
        total += 0.5 * weight_decay * float(np.sum(model.W1 * model.W1))
        grads["W1"] += weight_decay * model.W1
    return LossParts(total, loss_s, loss_u, loss_h), (grads if with_grad else None)


def accuracy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return float("nan")
    return float((probs[idx].argmax(axis=1) == labels[idx]).mean())


class EpochMetrics(NamedTuple):
    epoch: int
    loss_s: float
    loss_u: float
    loss_h: float
    train_acc: float
    val_acc: float
    test_acc: float
    chain_acceptance_rate: float


@dataclass
class TrainResult:
    model: GcnModel
    metrics: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = -1.0
    test_acc_at_best: float = float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            for m in self.metrics:
                w.writerow([m.epoch] + [repr(float(x)) for x in m[1:]])


def _check_step(parts: LossParts, probs: np.ndarray, num_classes: int):
    if not np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-9):
        raise RuntimeError("softmax rows do not sum to 1")
    if parts.loss_s < 0 or parts.loss_u < -1e-12:
        raise RuntimeError(f"negative loss: {parts}")
    if not -1e-12 <= parts.loss_h <= math.log(max(num_classes, 1)) + 1e-9:
        raise RuntimeError(f"entropy loss out of range: {parts.loss_h}")


def train(graph: Graph, chain_cfg: ChainConfig | None, model_cfg: ModelConfig,
          weights: LossWeights, epochs: int | None = None) -> TrainResult:
    """Joint chain sampling and GCN training.

    Each epoch advances the chain one step, takes one Adam update on the
    pair (previous sample, current sample), then evaluates on the original
    graph; that evaluation also refreshes the entropy vector driving the
    target. ``chain_cfg=None`` trains on the original graph only (vanilla
    GCN). Returns the parameters from the epoch with the best validation
    accuracy.
    """
    epochs = model_cfg.epochs if epochs is None else epochs
    seeds = np.random.SeedSequence(model_cfg.seed).spawn(1)
    rng = np.random.Generator(np.random.PCG64(seeds[0]))
    num_classes = graph.num_classes
    model = GcnModel.init(graph.feature_dim, model_cfg.hidden, num_classes, rng)
    opt = AdamState(model.params(), model_cfg.lr, model_cfg.beta1, model_cfg.beta2, model_cfg.adam_eps)
    adj0 = normalized_adjacency(graph)

    chain = None
    if chain_cfg is not None:
        chain = MHChain(graph, chain_cfg, EntropyVector.uniform(graph.num_nodes, num_classes))
        state = chain.state
    else:
        state = identity_state(graph, PropagationCache(graph, 1))

    result = TrainResult(model.copy())
    original = None
    for epoch in range(epochs):
        prev = state
        accepted = True
        if chain is not None:
            if original is not None:
                chain.set_entropy(EntropyVector.from_predictions(original.probs))
            accepted = chain.step().accepted
            state = chain.state
        if accepted or model_cfg.train_on_reject:
            parts, grads = objective(model, graph, prev, state, weights,
                                     kl_stop_gradient=model_cfg.kl_stop_gradient,
                                     weight_decay=model_cfg.weight_decay,
                                     original=original, adj_original=adj0)
            opt.update(model.params(), grads)
        else:
            parts = LossParts(0.0, 0.0, 0.0, 0.0)
        original = forward(model, graph, None, adj0)
        _check_step(parts, original.probs, num_classes)
        acc = [accuracy(original.probs, graph.labels, m)
               for m in (graph.train_mask, graph.val_mask, graph.test_mask)]
        rate = chain.accepted / chain.steps if chain is not None else 0.0
        result.metrics.append(EpochMetrics(epoch, parts.loss_s, parts.loss_u, parts.loss_h, *acc, rate))
        if acc[1] > result.best_val_acc:
            result.best_val_acc = acc[1]
            result.best_epoch = epoch
            result.test_acc_at_best = acc[2]
            result.model = model.copy()
    return result
