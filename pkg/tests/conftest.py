import numpy as np
import pytest

from fusedlasso import FusedProblem, PenaltyGraph


def random_connected_graph(rng, p, max_extra=None, weighted=True):
    """Random spanning tree plus up to ``max_extra`` extra edges."""
    if max_extra is None:
        max_extra = p
    edges = set()
    perm = rng.permutation(p)
    for i in range(1, p):
        a = int(perm[i])
        b = int(perm[rng.integers(0, i)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, max_extra + 1))):
        a, b = rng.integers(0, p, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    if weighted:
        triples = [(a, b, float(rng.uniform(0.5, 2.0))) for a, b in sorted(edges)]
        node_w = rng.uniform(0.5, 2.0, p)
    else:
        triples = [(a, b, 1.0) for a, b in sorted(edges)]
        node_w = np.ones(p)
    return PenaltyGraph.from_triples(p, triples, node_w)


def random_problem(rng, n=None, p=None, lambda1=None, lambda2=None, max_extra=None):
    n = int(rng.integers(5, 16)) if n is None else n
    p = int(rng.integers(2, 11)) if p is None else p
    lams = (0.0, 0.1, 1.0, 5.0)
    lambda1 = lams[int(rng.integers(0, 4))] if lambda1 is None else lambda1
    lambda2 = lams[int(rng.integers(0, 4))] if lambda2 is None else lambda2
    graph = random_connected_graph(rng, p, max_extra)
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n) * 2.0
    return FusedProblem(X=X, y=y, graph=graph, lambda1=lambda1, lambda2=lambda2)


@pytest.fixture
def two_node_problem():
    """The two-coefficient identity-design workhorse: X=I, y=(2, 0), unit chain."""

    def make(lambda1=0.0, lambda2=0.0):
        return FusedProblem(
            X=np.eye(2),
            y=np.array([2.0, 0.0]),
            graph=PenaltyGraph.chain(2),
            lambda1=lambda1,
            lambda2=lambda2,
        )

    return make
