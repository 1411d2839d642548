import sys

import numpy as np
import pytest

from rtci.graph import Graph


def dense_oracle_adjacency(g: Graph) -> np.ndarray:
    """Adjacency rebuilt edge by edge, independent of the CSR layout."""
    a = np.zeros((g.n, g.n))
    for u, v in g.edge_array():
        a[u, v] = a[v, u] = 1.0
    return a


def random_graph(rng, n, p):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


def path_graph(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
