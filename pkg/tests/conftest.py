"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from fuse_embed import Graph, LabelSet, load_edge_list, load_labels

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

# pass/fail lines recorded by the acceptance tests, printed at session end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# independent oracles (deliberately naive implementations)
# ---------------------------------------------------------------------------


def dense_adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    for i in range(g.n):
        for j in g.neighbors(i):
            a[i, j] = 1.0
    return a


def brute_modularity(g: Graph, s: np.ndarray) -> float:
    """Direct double sum over the full modularity matrix."""
    a = dense_adjacency(g)
    d = a.sum(axis=1)
    two_m = d.sum()
    b = a - np.outer(d, d) / two_m
    total = 0.0
    for i in range(g.n):
        for j in range(g.n):
            total += b[i, j] * float(s[i] @ s[j])
    return total / two_m


def random_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    """Erdos-Renyi graph that always has at least one edge."""
    mask = np.triu(rng.random((n, n)) < p, k=1)
    edges = list(zip(*np.nonzero(mask)))
    if not edges:
        edges = [(0, 1)]
    return Graph.from_edges(n, edges)


def random_labelset(rng: np.random.Generator, n: int, c: int, frac: float) -> LabelSet:
    labels = rng.integers(0, c, size=n)
    observed = rng.random(n) < frac
    return LabelSet(labels=labels.astype(np.int64), observed=observed, num_classes=c)


# ---------------------------------------------------------------------------
# small named graphs
# ---------------------------------------------------------------------------


@pytest.fixture
def triangle() -> Graph:
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3() -> Graph:
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def two_triangles() -> Graph:
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])


@pytest.fixture
def star5() -> Graph:
    # center 0, four leaves
    return Graph.from_edges(5, [(0, i) for i in range(1, 5)])


# ---------------------------------------------------------------------------
# datasets (committed under data/)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def cora() -> tuple[Graph, LabelSet]:
    g, orig = load_edge_list(DATA_DIR / "cora" / "edges.txt", with_id_map=True)
    id_map = {int(o): i for i, o in enumerate(orig)}
    ls = load_labels(DATA_DIR / "cora" / "labels.csv", g.n, id_map=id_map)
    return g, ls


@pytest.fixture(scope="session")
def citeseer() -> tuple[Graph, LabelSet]:
    g = load_edge_list(DATA_DIR / "citeseer" / "edges.txt", num_nodes=3327)
    ls = load_labels(DATA_DIR / "citeseer" / "labels.csv", g.n)
    return g, ls
