import itertools

import numpy as np
import pytest

from fusedlasso import DataError, FlowNetwork, max_flow, residual_reachability


def enumerate_min_cut(net: FlowNetwork) -> float:
    """Brute-force min s-t cut over all subsets of the non-terminal nodes."""
    others = [u for u in range(net.n_nodes) if u not in (net.source, net.sink)]
    assert len(others) <= 12
    arcs = [(tail, net._head[e], net._cap[e]) for tail in range(net.n_nodes) for e in net._adj[tail] if e % 2 == 0]
    arcs += [(net._head[e], tail, net._cap[e ^ 1]) for tail in range(net.n_nodes) for e in net._adj[tail] if e % 2 == 0]
    best = np.inf
    for r in range(len(others) + 1):
        for side in itertools.combinations(others, r):
            s_side = set(side) | {net.source}
            cut = sum(c for u, v, c in arcs if u in s_side and v not in s_side)
            best = min(best, cut)
    return best


def build(n, arcs, source, sink):
    net = FlowNetwork(n, source=source, sink=sink)
    ids = [net.add_edge(*a) for a in arcs]
    return net, ids


class TestHandExamples:
    def test_series_bottleneck(self):
        net, _ = build(3, [(0, 1, 3.0, 0.0), (1, 2, 2.0, 0.0)], source=0, sink=2)
        value, _ = max_flow(net)
        assert value == pytest.approx(2.0, abs=1e-12)
        rr = residual_reachability(net)
        assert rr.from_source == {1}
        assert rr.to_sink == frozenset()

    def test_parallel_paths_with_cross_edge(self):
        arcs = [(0, 1, 1.0, 0.0), (0, 2, 1.0, 0.0), (1, 3, 1.0, 0.0), (2, 3, 1.0, 0.0), (1, 2, 5.0, 5.0)]
        net, _ = build(4, arcs, source=0, sink=3)
        value, _ = max_flow(net)
        assert value == pytest.approx(2.0, abs=1e-12)

    def test_two_node_split_instance(self):
        # pulls +-1 with internal capacity lambda2*w = 1: everything saturates
        arcs = [(2, 0, 1.0, 0.0), (1, 3, 1.0, 0.0), (0, 1, 1.0, 1.0)]
        net, _ = build(4, arcs, source=2, sink=3)
        value, _ = max_flow(net)
        assert value == pytest.approx(1.0, abs=1e-12)
        rr = residual_reachability(net)
        assert rr.from_source == frozenset() and rr.to_sink == frozenset()

    def test_saturated_sources_empty_reachability(self):
        net, _ = build(3, [(0, 1, 1.0, 0.0), (1, 2, 5.0, 0.0)], source=0, sink=2)
        max_flow(net)
        rr = residual_reachability(net)
        assert rr.from_source == frozenset()
        assert rr.to_sink == {1}

    def test_zero_internal_capacity_splits_by_pull_sign(self):
        # no internal resistance: every pulled-up node from_source, pulled-down to_sink
        net = FlowNetwork(5, source=3, sink=4)
        net.add_edge(3, 0, 1.5)
        net.add_edge(3, 1, 0.5)
        net.add_edge(2, 4, 2.0)
        value = net.max_flow()
        assert value == 0.0
        rr = net.residual_reachability()
        assert rr.from_source == {0, 1}
        assert rr.to_sink == {2}


class TestAgainstEnumeration:
    @pytest.mark.parametrize("seed", range(30))
    def test_random_small_networks(self, seed):
        rng = np.random.default_rng(seed)
        q = int(rng.integers(2, 11))  # internal nodes; total <= 12 excluding terminals
        net = FlowNetwork(q + 2, source=q, sink=q + 1)
        for i in range(q - 1):
            c = float(rng.uniform(0.1, 4.0))
            net.add_edge(i, i + 1, c, c)
        for _ in range(int(rng.integers(0, q))):
            a, b = rng.integers(0, q, size=2)
            if a != b:
                net.add_edge(int(a), int(b), float(rng.uniform(0.0, 3.0)), float(rng.uniform(0.0, 3.0)))
        for i in range(q):
            pull = float(rng.normal(0, 2))
            if pull < 0:
                net.add_edge(q, i, -pull)
            elif pull > 0:
                net.add_edge(i, q + 1, pull)
        value = net.max_flow()
        assert value == pytest.approx(enumerate_min_cut(net), rel=1e-10, abs=1e-10)
        rr = net.residual_reachability()
        assert not (rr.from_source & rr.to_sink)

    def test_integer_capacities_give_integer_flow(self):
        rng = np.random.default_rng(99)
        for _ in range(20):
            q = int(rng.integers(2, 9))
            net = FlowNetwork(q + 2, source=q, sink=q + 1)
            for i in range(q - 1):
                c = float(rng.integers(1, 6))
                net.add_edge(i, i + 1, c, c)
            for i in range(q):
                pull = int(rng.integers(-4, 5))
                if pull < 0:
                    net.add_edge(q, i, float(-pull))
                elif pull > 0:
                    net.add_edge(i, q + 1, float(pull))
            value = net.max_flow()
            assert value == pytest.approx(round(value), abs=1e-9)

    def test_relabeled_instance_same_value(self):
        rng = np.random.default_rng(5)
        q = 6
        arcs = []
        for i in range(q - 1):
            arcs.append((i, i + 1, float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2))))
        pulls = rng.normal(0, 2, q)
        perm = rng.permutation(q)

        def value_with(relabel):
            net = FlowNetwork(q + 2, source=q, sink=q + 1)
            for a, b, c, rc in arcs:
                net.add_edge(int(relabel[a]), int(relabel[b]), c, rc)
            for i in range(q):
                if pulls[i] < 0:
                    net.add_edge(q, int(relabel[i]), -float(pulls[i]))
                elif pulls[i] > 0:
                    net.add_edge(int(relabel[i]), q + 1, float(pulls[i]))
            return net.max_flow()

        assert value_with(np.arange(q)) == pytest.approx(value_with(perm), rel=1e-12)


class TestValidation:
    def test_rejects_negative_capacity(self):
        net = FlowNetwork(3, source=0, sink=2)
        with pytest.raises(DataError):
            net.add_edge(0, 1, -1.0)

    def test_rejects_infinite_capacity(self):
        net = FlowNetwork(3, source=0, sink=2)
        with pytest.raises(DataError):
            net.add_edge(0, 1, np.inf)

    def test_reachability_requires_solve(self):
        net = FlowNetwork(3, source=0, sink=2)
        net.add_edge(0, 1, 1.0)
        with pytest.raises(DataError):
            net.residual_reachability()

    def test_no_edits_after_solve(self):
        net = FlowNetwork(3, source=0, sink=2)
        net.add_edge(0, 2, 1.0)
        net.max_flow()
        with pytest.raises(DataError):
            net.add_edge(0, 1, 1.0)
