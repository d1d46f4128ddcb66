"""Max-flow over source/sink-augmented pull networks, with residual reachability.

Capacities are real valued (they come from gradients), so saturation is never
exact in floating point; residuals below a small epsilon relative to the
largest capacity are treated as zero both by the solver and by the
reachability queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataError

#: residual capacities at or below ``RESIDUAL_EPS * max_capacity`` count as zero
RESIDUAL_EPS = 1e-10


@dataclass(frozen=True)
class ResidualReachability:
    """Node sets read off the residual graph at max flow.

    ``from_source`` are the nodes still reachable from the source,
    ``to_sink`` the nodes that can still reach the sink; neither set includes
    the source or sink themselves. At max flow the two sets are disjoint.
    """

    from_source: frozenset[int]
    to_sink: frozenset[int]


class FlowNetwork:
    """Directed flow network with paired arcs and antisymmetric flow.

    Nodes are integers ``0..n_nodes-1``; the caller designates one source and
    one sink. Arcs are added in pairs (forward capacity, reverse capacity), so
    an undirected internal edge is a pair with equal capacities and a
    source/sink arc is a pair with a zero-capacity reverse.
    """

    def __init__(self, n_nodes: int, source: int, sink: int):
        if n_nodes < 2:
            raise DataError("a flow network needs at least source and sink")
        if not (0 <= source < n_nodes and 0 <= sink < n_nodes) or source == sink:
            raise DataError("source and sink must be distinct valid node ids")
        self.n_nodes = n_nodes
        self.source = source
        self.sink = sink
        self._head: list[int] = []
        self._cap: list[float] = []
        self._flow: list[float] = []
        self._adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self._solved = False

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> int:
        """Add the arc pair ``u -> v`` / ``v -> u``; returns the forward arc id."""
        if self._solved:
            raise DataError("network already solved; build a new one")
        if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes) or u == v:
            raise DataError(f"invalid arc ({u}, {v})")
        for c in (cap, rev_cap):
            if not np.isfinite(c) or c < 0.0:
                raise DataError("capacities must be finite and non-negative")
        e = len(self._head)
        self._head += [v, u]
        self._cap += [float(cap), float(rev_cap)]
        self._flow += [0.0, 0.0]
        self._adj[u].append(e)
        self._adj[v].append(e + 1)
        return e

    @property
    def flow_value(self) -> float:
        if not self._solved:
            raise DataError("call max_flow first")
        return sum(self._flow[e] for e in self._adj[self.source])

    def net_flow(self, arc_id: int) -> float:
        """Net flow on the forward arc returned by :meth:`add_edge`."""
        return self._flow[arc_id]

    def _eps(self) -> float:
        max_cap = max(self._cap, default=0.0)
        return RESIDUAL_EPS * max(1.0, max_cap)

    def max_flow(self) -> float:
        """Highest-label push-relabel with a gap heuristic; returns the flow value."""
        if self._solved:
            return self.flow_value
        n = self.n_nodes
        s, t = self.source, self.sink
        eps = self._eps()
        cap, flow, head, adj = self._cap, self._flow, self._head, self._adj
        height = [0] * n
        excess = [0.0] * n
        count = [0] * (2 * n + 1)  # nodes per height level, for the gap heuristic
        height[s] = n
        count[0] = n - 1
        count[n] = 1
        # saturate all source arcs
        for e in adj[s]:
            delta = cap[e] - flow[e]
            if delta > eps:
                flow[e] += delta
                flow[e ^ 1] -= delta
                excess[head[e]] += delta
                excess[s] -= delta
        # buckets of active nodes by height, scanned from the highest level down
        buckets: list[list[int]] = [[] for _ in range(2 * n + 1)]
        in_bucket = [False] * n
        highest = 0
        for u in range(n):
            if u != s and u != t and excess[u] > eps:
                buckets[height[u]].append(u)
                in_bucket[u] = True
                highest = max(highest, height[u])
        arc_ptr = [0] * n
        while highest >= 0:
            if not buckets[highest]:
                highest -= 1
                continue
            u = buckets[highest].pop()
            in_bucket[u] = False
            if u == s or u == t or excess[u] <= eps:
                continue
            while excess[u] > eps:
                if arc_ptr[u] == len(adj[u]):
                    # relabel u; apply the gap heuristic if its old level empties
                    old = height[u]
                    count[old] -= 1
                    min_h = 2 * n
                    for e in adj[u]:
                        if cap[e] - flow[e] > eps:
                            min_h = min(min_h, height[head[e]])
                    height[u] = min_h + 1 if min_h < 2 * n else 2 * n
                    count[height[u]] += 1
                    if count[old] == 0 and old < n:
                        # the emptied level cuts every higher sub-sink node off the sink
                        for v in range(n):
                            if old < height[v] < n:
                                count[height[v]] -= 1
                                height[v] = n + 1
                                count[n + 1] += 1
                    arc_ptr[u] = 0
                    if height[u] >= 2 * n:
                        break
                    continue
                e = adj[u][arc_ptr[u]]
                v = head[e]
                residual = cap[e] - flow[e]
                if residual > eps and height[u] == height[v] + 1:
                    delta = min(excess[u], residual)
                    flow[e] += delta
                    flow[e ^ 1] -= delta
                    excess[u] -= delta
                    excess[v] += delta
                    if v != s and v != t and not in_bucket[v] and excess[v] > eps:
                        buckets[height[v]].append(v)
                        in_bucket[v] = True
                        if height[v] > highest:
                            highest = height[v]
                else:
                    arc_ptr[u] += 1
            if excess[u] > eps and height[u] < 2 * n:
                buckets[height[u]].append(u)
                in_bucket[u] = True
                highest = max(highest, height[u])
        self._solved = True
        return self.flow_value

    def residual_reachability(self) -> ResidualReachability:
        """BFS over positive-residual arcs, forward from the source and backward to the sink."""
        if not self._solved:
            raise DataError("call max_flow before querying reachability")
        eps = self._eps()
        head, cap, flow, adj = self._head, self._cap, self._flow, self._adj

        def bfs(start: int, forward: bool) -> set[int]:
            seen = {start}
            queue = [start]
            while queue:
                u = queue.pop()
                for e in adj[u]:
                    # backward search walks arcs whose *reverse* has residual capacity
                    arc = e if forward else e ^ 1
                    if cap[arc] - flow[arc] > eps and head[e] not in seen:
                        seen.add(head[e])
                        queue.append(head[e])
            seen.discard(start)
            return seen

        from_source = bfs(self.source, forward=True)
        to_sink = bfs(self.sink, forward=False)
        from_source.discard(self.sink)
        to_sink.discard(self.source)
        return ResidualReachability(frozenset(from_source), frozenset(to_sink))


def max_flow(network: FlowNetwork) -> tuple[float, FlowNetwork]:
    """Solve ``network`` to max flow; returns the flow value and the saturated network."""
    value = network.max_flow()
    return value, network


def residual_reachability(network: FlowNetwork) -> ResidualReachability:
    """Reachability split of a network already at max flow."""
    return network.residual_reachability()
