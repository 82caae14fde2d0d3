import numpy as np
import pytest

from mhaug.graph import Graph

# lines collected by test_acceptance.py, replayed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def random_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    iu, ju = np.triu_indices(n, 1)
    hit = rng.random(iu.size) < p
    return Graph.from_edges(n, np.stack([iu[hit], ju[hit]], axis=1))


def dense_row_counts(graph: Graph, edge_keep, k: int, x=None) -> np.ndarray:
    """Integer ``(A'+I)^k x`` via an explicit dense matrix power."""
    a = np.eye(graph.num_nodes, dtype=np.int64)
    e = graph.edges[np.asarray(edge_keep, dtype=bool)]
    a[e[:, 0], e[:, 1]] = 1
    a[e[:, 1], e[:, 0]] = 1
    x = np.ones(graph.num_nodes, dtype=np.int64) if x is None else np.asarray(x, dtype=np.int64)
    return np.linalg.matrix_power(a, k) @ x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
