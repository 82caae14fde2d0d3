"""Graph file I/O and synthetic graph generators.

Text format (UTF-8, LF)::

    n m d c
    u v            # m edge lines
    x_1 ... x_d    # n feature lines
    label          # n lines, -1 = unlabeled
    0 1 0 ...      # train mask
    0 0 1 ...      # val mask
    1 0 0 ...      # test mask
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphValidationError

__all__ = [
    "GraphFormatError",
    "load_graph",
    "save_graph",
    "parse_graph",
    "format_graph",
    "SbmSpec",
    "gen_sbm",
    "gen_grid",
    "gen_complete",
    "gen_star",
    "gen_path",
]


class GraphFormatError(ValueError):
    """Malformed graph file; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _ints(tokens, lineno, what):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise GraphFormatError(lineno, f"expected integers in {what}") from None


def parse_graph(text: str) -> Graph:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            raise GraphFormatError(pos + 1, f"unexpected end of file, expected {what}")
        pos += 1
        return pos, lines[pos - 1].split()

    lineno, head = take("header")
    if len(head) != 4:
        raise GraphFormatError(lineno, "header must be 'n m d c'")
    n, m, d, c = _ints(head, lineno, "header")
    if min(n, m, d, c) < 0:
        raise GraphFormatError(lineno, "header values must be non-negative")

    edges = np.empty((m, 2), dtype=np.int64)
    for j in range(m):
        lineno, tok = take("edge line")
        if len(tok) != 2:
            raise GraphFormatError(lineno, "edge line must be 'u v'")
        edges[j] = _ints(tok, lineno, "edge line")

    features = np.empty((n, d))
    for i in range(n):
        lineno, tok = take("feature line")
        if len(tok) != d:
            raise GraphFormatError(lineno, f"feature line must hold {d} values")
        try:
            features[i] = [float(t) for t in tok]
        except ValueError:
            raise GraphFormatError(lineno, "feature values must be reals") from None

    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        lineno, tok = take("label line")
        if len(tok) != 1:
            raise GraphFormatError(lineno, "label line must hold one integer")
        labels[i] = _ints(tok, lineno, "label line")[0]

    masks = []
    for name in ("train", "val", "test"):
        lineno, tok = take(f"{name} mask line")
        vals = _ints(tok, lineno, f"{name} mask")
        if len(vals) != n or any(v not in (0, 1) for v in vals):
            raise GraphFormatError(lineno, f"{name} mask must hold {n} values of 0/1")
        masks.append(np.array(vals, dtype=bool))
    if pos != len(lines):
        raise GraphFormatError(pos + 1, "trailing content after mask lines")

    if labels.size and labels.max() >= c:
        raise GraphValidationError("label index must be < num_classes")
    return Graph(n, edges, features, labels, *masks, num_classes=c)


def format_graph(graph: Graph) -> str:
    out = [f"{graph.num_nodes} {graph.num_edges} {graph.feature_dim} {graph.num_classes}"]
    out.extend(f"{u} {v}" for u, v in graph.edges.tolist())
    out.extend(" ".join(repr(float(x)) for x in row) for row in graph.features)
    out.extend(str(int(y)) for y in graph.labels)
    for mask in (graph.train_mask, graph.val_mask, graph.test_mask):
        out.append(" ".join("1" if b else "0" for b in mask))
    return "\n".join(out) + "\n"


def load_graph(path) -> Graph:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_graph(fh.read())


def save_graph(graph: Graph, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_graph(graph))


@dataclass(frozen=True)
class SbmSpec:
    """Stochastic block model with one class per block.

    Features are ``one_hot(block)`` padded to ``feature_dim`` plus Gaussian
    noise of standard deviation ``feature_noise``.
    """

    blocks: int = 2
    nodes_per_block: int = 100
    p_in: float = 0.1
    p_out: float = 0.02
    feature_dim: int = 2
    feature_noise: float = 0.5
    labels_per_class: int = 5
    val_cap: int = 500

    def __post_init__(self):
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ValueError("SBM requires 0 <= p_out < p_in <= 1")
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ValueError("blocks and nodes_per_block must be positive")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must be >= blocks for the one-hot block code")
        if self.labels_per_class > self.nodes_per_block:
            raise ValueError("labels_per_class exceeds block size")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")


def gen_sbm(spec: SbmSpec, seed: int = 0) -> Graph:
    """Sample an SBM graph with a per-class train split.

    The validation split takes half of the remaining nodes, capped at
    ``spec.val_cap``; the rest is test.
    """
    ss = np.random.SeedSequence(seed)
    edge_rng, feat_rng, split_rng = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3))
    b, k = spec.blocks, spec.nodes_per_block
    n = b * k
    labels = np.repeat(np.arange(b), k)
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
    hit = edge_rng.random(iu.size) < prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)

    features = np.zeros((n, spec.feature_dim))
    features[np.arange(n), labels] = 1.0
    features += spec.feature_noise * feat_rng.standard_normal((n, spec.feature_dim))

    train = np.zeros(n, dtype=bool)
    for c in range(b):
        members = np.flatnonzero(labels == c)
        train[split_rng.choice(members, spec.labels_per_class, replace=False)] = True
    rest = split_rng.permutation(np.flatnonzero(~train))
    n_val = min(spec.val_cap, rest.size // 2)
    val = np.zeros(n, dtype=bool)
    val[rest[:n_val]] = True
    test = ~(train | val)
    return Graph(n, edges, features, labels, train, val, test, num_classes=b)


def gen_grid(rows: int, cols: int) -> Graph:
    """``rows x cols`` lattice, row-major numbering."""
    if rows < 1 or cols < 1:
        raise ValueError("grid sizes must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph.from_edges(rows * cols, edges)


def gen_complete(n: int) -> Graph:
    if n < 1:
        raise ValueError("n must be positive")
    return Graph.from_edges(n, list(itertools.combinations(range(n), 2)))


def gen_star(leaves: int) -> Graph:
    """Center 0 joined to leaves ``1..leaves``."""
    if leaves < 1:
        raise ValueError("leaves must be positive")
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def gen_path(n: int) -> Graph:
    if n < 1:
        raise ValueError("n must be positive")
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
