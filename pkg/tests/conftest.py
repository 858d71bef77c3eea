import numpy as np
import pytest

from graphsr.graph import build_graph


def random_graph(rng: np.random.Generator, n: int, p: float = 0.3, weighted: bool = False):
    """Erdos-Renyi graph; a spanning path keeps it connected."""
    edges = {}
    for u in range(n - 1):
        edges[(u, u + 1)] = 1.0
    for u in range(n):
        for v in range(u + 2, n):
            if rng.random() < p:
                edges[(u, v)] = 1.0
    if weighted:
        edges = {k: float(rng.uniform(0.5, 2.0)) for k in edges}
    perm = rng.permutation(n)
    return build_graph(n, [(int(perm[u]), int(perm[v]), w) for (u, v), w in edges.items()])


def path_graph(n: int):
    return build_graph(n, [(i, i + 1, 1.0) for i in range(n - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
