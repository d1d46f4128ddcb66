"""Core data types and loss evaluation for the generalized fused lasso.

The objective minimized throughout this package is

    fit(beta) + lambda1 * sum_k w_k |beta_k|
              + lambda2 * sum_{(k,l) in E, k<l} w_kl |beta_k - beta_l|

where ``fit`` is half the residual sum of squares for the squared loss and
the negative (partial) log-likelihood for the logistic and Cox losses, and
E is the edge set of a weighted undirected penalty graph over the
coefficient indices.

All types in this module are immutable after construction and safe to share
across threads; solvers keep their mutable state private.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SQUARED = "squared"
LOGISTIC = "logistic"
COX = "cox"
LOSSES = (SQUARED, LOGISTIC, COX)


class FusedLassoError(Exception):
    """Base class for structured errors raised by this package."""


class DimensionError(FusedLassoError):
    """Shapes or lengths of inputs do not line up."""


class DataError(FusedLassoError):
    """Input values violate a documented precondition."""


def _as_float_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PenaltyGraph:
    """Weighted undirected graph over coefficient indices ``0..p-1``.

    Parameters
    ----------
    p:
        Number of nodes (= number of coefficients).
    node_weights:
        Strictly positive weight per node, applied to the ``|beta_k|`` terms.
    edges:
        Integer array of shape ``(m, 2)`` with ``edges[e, 0] < edges[e, 1]``.
    edge_weights:
        Strictly positive weight per edge, applied to the difference terms.
    """

    p: int
    node_weights: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray

    def __post_init__(self):
        if self.p < 1:
            raise DataError(f"graph needs at least one node, got p={self.p}")
        nw = _as_float_vector(self.node_weights, "node_weights")
        if nw.shape[0] != self.p:
            raise DimensionError(f"node_weights has length {nw.shape[0]}, expected {self.p}")
        if not np.all(np.isfinite(nw)) or np.any(nw <= 0.0):
            raise DataError("node weights must be finite and strictly positive")
        edges = np.asarray(self.edges, dtype=np.intp)
        if edges.size == 0:
            edges = edges.reshape(0, 2)
        if edges.ndim != 2 or edges.shape[1] != 2:
            raise DimensionError(f"edges must have shape (m, 2), got {edges.shape}")
        ew = _as_float_vector(self.edge_weights, "edge_weights")
        if ew.shape[0] != edges.shape[0]:
            raise DimensionError("edge_weights length does not match number of edges")
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.p:
                raise DataError("edge endpoints out of range")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise DataError("edges must satisfy k < l (no self-loops, canonical order)")
            keys = edges[:, 0] * self.p + edges[:, 1]
            if np.unique(keys).size != keys.size:
                raise DataError("duplicate edges are not allowed")
        if not np.all(np.isfinite(ew)) or np.any(ew <= 0.0):
            raise DataError("edge weights must be finite and strictly positive")
        object.__setattr__(self, "node_weights", _frozen(nw))
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "edge_weights", _frozen(ew))

    @classmethod
    def from_triples(
        cls,
        p: int,
        triples: Iterable[tuple[int, int, float]],
        node_weights: Sequence[float] | None = None,
    ) -> "PenaltyGraph":
        """Build a graph from ``(k, l, weight)`` triples; endpoints may be unordered."""
        ks, ls, ws = [], [], []
        for k, l, w in triples:
            if k == l:
                raise DataError(f"self-loop on node {k}")
            a, b = (k, l) if k < l else (l, k)
            ks.append(a)
            ls.append(b)
            ws.append(w)
        edges = np.column_stack([ks, ls]).astype(np.intp) if ks else np.empty((0, 2), dtype=np.intp)
        nw = np.ones(p) if node_weights is None else np.asarray(node_weights, dtype=float)
        return cls(p=p, node_weights=nw, edges=edges, edge_weights=np.asarray(ws, dtype=float))

    @classmethod
    def chain(cls, p: int, edge_weight: float = 1.0, node_weights: Sequence[float] | None = None) -> "PenaltyGraph":
        """Path graph 0-1-2-...-(p-1) with a constant edge weight."""
        edges = np.column_stack([np.arange(p - 1), np.arange(1, p)])
        nw = np.ones(p) if node_weights is None else np.asarray(node_weights, dtype=float)
        return cls(p=p, node_weights=nw, edges=edges, edge_weights=np.full(p - 1, float(edge_weight)))

    @classmethod
    def grid2d(cls, side: int, edge_weight: float = 1.0) -> "PenaltyGraph":
        """4-neighbor grid over ``side * side`` nodes in row-major order."""
        idx = np.arange(side * side).reshape(side, side)
        horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
        vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
        edges = np.vstack([horiz, vert])
        return cls(
            p=side * side,
            node_weights=np.ones(side * side),
            edges=edges,
            edge_weights=np.full(edges.shape[0], float(edge_weight)),
        )

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def _adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        # CSR-style: for node k, entries offsets[k]:offsets[k+1] of (neighbor, weight, edge id).
        if self.m == 0:
            offsets = np.zeros(self.p + 1, dtype=np.intp)
            nbr = np.empty(0, dtype=np.intp)
            wts = np.empty(0)
            eid = np.empty(0, dtype=np.intp)
        else:
            tails = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            heads = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            w2 = np.concatenate([self.edge_weights, self.edge_weights])
            e2 = np.concatenate([np.arange(self.m, dtype=np.intp)] * 2)
            order = np.argsort(tails, kind="stable")
            nbr = np.ascontiguousarray(heads[order])
            wts = np.ascontiguousarray(w2[order])
            eid = np.ascontiguousarray(e2[order])
            offsets = np.zeros(self.p + 1, dtype=np.intp)
            np.cumsum(np.bincount(tails, minlength=self.p), out=offsets[1:])
        for arr in (offsets, nbr, wts, eid):
            arr.setflags(write=False)
        return offsets, nbr, wts, eid

    def neighbors(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor indices and edge weights of node ``k`` (each edge once per direction)."""
        offsets, nbr, wts, _ = self._adjacency
        return nbr[offsets[k]:offsets[k + 1]], wts[offsets[k]:offsets[k + 1]]

    def incident_edges(self, k: int) -> np.ndarray:
        """Edge ids incident to node ``k``."""
        offsets, _, _, eid = self._adjacency
        return eid[offsets[k]:offsets[k + 1]]

    def degree(self, k: int) -> int:
        offsets = self._adjacency[0]
        return int(offsets[k + 1] - offsets[k])

    def connected_components(self, nodes: np.ndarray | None = None) -> list[np.ndarray]:
        """Connected components of the graph restricted to ``nodes`` (all by default).

        Components are sorted by smallest member and each component is sorted.
        """
        if nodes is None:
            nodes = np.arange(self.p)
        member = np.zeros(self.p, dtype=bool)
        member[nodes] = True
        seen = np.zeros(self.p, dtype=bool)
        offsets, nbr, _, _ = self._adjacency
        comps = []
        for start in np.sort(np.asarray(nodes)):
            if seen[start]:
                continue
            stack = [int(start)]
            seen[start] = True
            comp = []
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in nbr[offsets[u]:offsets[u + 1]]:
                    if member[v] and not seen[v]:
                        seen[v] = True
                        stack.append(int(v))
            comps.append(np.array(sorted(comp), dtype=np.intp))
        return comps

    def subgraph(self, nodes: np.ndarray) -> tuple["PenaltyGraph", np.ndarray, np.ndarray]:
        """Graph restricted to ``nodes``.

        Returns ``(sub, node_map, edge_ids)`` where ``node_map`` lists the original
        index of each subgraph node and ``edge_ids`` the original id of each
        subgraph edge.
        """
        nodes = np.sort(np.asarray(nodes, dtype=np.intp))
        pos = -np.ones(self.p, dtype=np.intp)
        pos[nodes] = np.arange(nodes.size)
        keep = (pos[self.edges[:, 0]] >= 0) & (pos[self.edges[:, 1]] >= 0) if self.m else np.zeros(0, bool)
        edge_ids = np.flatnonzero(keep)
        sub_edges = pos[self.edges[edge_ids]] if edge_ids.size else np.empty((0, 2), dtype=np.intp)
        sub = PenaltyGraph(
            p=nodes.size,
            node_weights=self.node_weights[nodes],
            edges=sub_edges,
            edge_weights=self.edge_weights[edge_ids],
        )
        return sub, nodes, edge_ids


@dataclass(frozen=True)
class FusedProblem:
    """One full problem instance: data, penalty graph, penalty levels and loss family.

    For ``loss="cox"`` the response is an ``(n, 2)`` array of ``(time, status)``
    rows with strictly positive, pairwise distinct times (ties are not
    supported) and status 1 for an observed event, 0 for censoring.

    ``obs_weights`` (squared loss only) weight the residual of each
    observation; they are applied by scaling row ``i`` of ``X`` and ``y_i``
    by ``sqrt(v_i)``, which is how the reweighted GLM drivers reuse the
    squared-error core.
    """

    X: np.ndarray
    y: np.ndarray
    graph: PenaltyGraph
    lambda1: float
    lambda2: float
    loss: str = SQUARED
    obs_weights: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionError(f"X must be a matrix, got shape {X.shape}")
        n, p = X.shape
        if p != self.graph.p:
            raise DimensionError(f"X has {p} columns but the graph has {self.graph.p} nodes")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite entries")
        if self.loss not in LOSSES:
            raise DataError(f"unknown loss {self.loss!r}, expected one of {LOSSES}")
        y = np.asarray(self.y, dtype=float)
        if self.loss == COX:
            if y.ndim != 2 or y.shape[1] != 2:
                raise DimensionError("cox response must be an (n, 2) array of (time, status)")
            if y.shape[0] != n:
                raise DimensionError(f"y has {y.shape[0]} rows but X has {n}")
            times, status = y[:, 0], y[:, 1]
            if np.any(times <= 0) or not np.all(np.isfinite(times)):
                raise DataError("event times must be finite and positive")
            if np.unique(times).size != times.size:
                raise DataError("tied event times are not supported")
            if not np.all(np.isin(status, (0.0, 1.0))):
                raise DataError("status must be 0 (censored) or 1 (event)")
        else:
            y = _as_float_vector(y, "y")
            if y.shape[0] != n:
                raise DimensionError(f"y has length {y.shape[0]} but X has {n} rows")
            if not np.all(np.isfinite(y)):
                raise DataError("y contains non-finite entries")
            if self.loss == LOGISTIC and not np.all(np.isin(y, (0.0, 1.0))):
                raise DataError("logistic response must be 0/1")
        if not (np.isfinite(self.lambda1) and self.lambda1 >= 0.0):
            raise DataError("lambda1 must be finite and >= 0")
        if not (np.isfinite(self.lambda2) and self.lambda2 >= 0.0):
            raise DataError("lambda2 must be finite and >= 0")
        if self.obs_weights is not None:
            if self.loss != SQUARED:
                raise DataError("obs_weights are only supported with the squared loss")
            v = _as_float_vector(self.obs_weights, "obs_weights")
            if v.shape[0] != n:
                raise DimensionError("obs_weights length does not match number of observations")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise DataError("obs_weights must be finite and >= 0")
            object.__setattr__(self, "obs_weights", _frozen(v))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def _sqrt_weights(self) -> np.ndarray | None:
        if self.obs_weights is None:
            return None
        return np.sqrt(self.obs_weights)

    @cached_property
    def weighted_X(self) -> np.ndarray:
        """Design matrix with rows scaled by sqrt(obs_weights).

        Stored column-major: the coordinate solvers read one column at a time.
        """
        W = self.X if self._sqrt_weights is None else self.X * self._sqrt_weights[:, None]
        out = np.asfortranarray(W)
        out.setflags(write=False)
        return out

    @cached_property
    def weighted_y(self) -> np.ndarray:
        if self._sqrt_weights is None:
            return self.y
        return _frozen(self.y * self._sqrt_weights)

    @cached_property
    def column_sq_norms(self) -> np.ndarray:
        """Diagonal of X^T X for the (weighted) design; precomputed once per problem."""
        return _frozen(np.einsum("ij,ij->j", self.weighted_X, self.weighted_X))

    @cached_property
    def _cox_order(self) -> np.ndarray:
        # Observations sorted by ascending event time; risk sets are suffixes.
        return _frozen(np.argsort(self.y[:, 0], kind="stable"))

    def with_lambdas(self, lambda1: float, lambda2: float) -> "FusedProblem":
        """Same data, different penalty levels. Shares the underlying arrays."""
        clone = object.__new__(FusedProblem)
        for name in ("X", "y", "graph", "loss", "obs_weights"):
            object.__setattr__(clone, name, getattr(self, name))
        object.__setattr__(clone, "lambda1", float(lambda1))
        object.__setattr__(clone, "lambda2", float(lambda2))
        # share the cached derived arrays, which do not depend on the lambdas
        for name in ("weighted_X", "weighted_y", "column_sq_norms", "_sqrt_weights", "_cox_order"):
            if name in self.__dict__:
                clone.__dict__[name] = self.__dict__[name]
        return clone

    def _check_beta(self, beta) -> np.ndarray:
        beta = _as_float_vector(beta, "beta")
        if beta.shape[0] != self.p:
            raise DimensionError(f"beta has length {beta.shape[0]}, expected {self.p}")
        if not np.all(np.isfinite(beta)):
            raise DataError("beta contains non-finite entries")
        return beta


@dataclass(frozen=True)
class OptimalityCertificate:
    """Subgradient multipliers witnessing stationarity.

    ``s[k]`` is the multiplier of the ``|beta_k|`` term, ``t[e]`` the multiplier
    of edge ``e`` oriented from the smaller to the larger endpoint;
    ``max_residual`` is the largest absolute value of the per-coordinate
    stationarity expression.
    """

    s: np.ndarray
    t: np.ndarray
    max_residual: float

    def __post_init__(self):
        object.__setattr__(self, "s", _frozen(np.asarray(self.s, dtype=float)))
        object.__setattr__(self, "t", _frozen(np.asarray(self.t, dtype=float)))


@dataclass(frozen=True)
class Solution:
    """Result of a solver run."""

    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool = True
    certificate: OptimalityCertificate | None = None
    diagnostics: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(np.asarray(self.beta, dtype=float)))

    @property
    def nonzeros(self) -> int:
        return int(np.count_nonzero(self.beta))


def fit_value(problem: FusedProblem, beta) -> float:
    """Data-fit part of the objective (no penalties)."""
    beta = problem._check_beta(beta)
    if problem.loss == SQUARED:
        r = problem.weighted_y - problem.weighted_X @ beta
        return 0.5 * float(r @ r)
    eta = problem.X @ beta
    if problem.loss == LOGISTIC:
        sign = 2.0 * problem.y - 1.0
        return float(np.sum(np.logaddexp(0.0, -sign * eta)))
    # cox negative partial log-likelihood; risk sets are suffixes in time order
    order = problem._cox_order
    eta_sorted = eta[order]
    status_sorted = problem.y[order, 1]
    # log of sum_{l in R(t_k)} exp(eta_l), computed as a reverse running logaddexp
    log_risk = np.logaddexp.accumulate(eta_sorted[::-1])[::-1]
    return float(np.sum(status_sorted * (log_risk - eta_sorted)))


def penalty_value(problem: FusedProblem, beta) -> float:
    """Penalty part of the objective."""
    beta = problem._check_beta(beta)
    g = problem.graph
    total = problem.lambda1 * float(g.node_weights @ np.abs(beta))
    if g.m:
        diffs = beta[g.edges[:, 0]] - beta[g.edges[:, 1]]
        total += problem.lambda2 * float(g.edge_weights @ np.abs(diffs))
    return total


def loss_value(problem: FusedProblem, beta) -> float:
    """Full objective value at ``beta``."""
    return fit_value(problem, beta) + penalty_value(problem, beta)


def smooth_fit_gradient(problem: FusedProblem, beta) -> np.ndarray:
    """Gradient of the data-fit part (squared, logistic or Cox)."""
    beta = problem._check_beta(beta)
    if problem.loss == SQUARED:
        r = problem.weighted_y - problem.weighted_X @ beta
        return -(problem.weighted_X.T @ r)
    eta = problem.X @ beta
    if problem.loss == LOGISTIC:
        prob = 1.0 / (1.0 + np.exp(-eta))
        return problem.X.T @ (prob - problem.y)
    order = problem._cox_order
    eta_sorted = eta[order]
    status_sorted = problem.y[order, 1]
    X_sorted = problem.X[order]
    w = np.exp(eta_sorted - eta_sorted.max())
    denom = np.cumsum(w[::-1])[::-1]
    num = np.cumsum((w[:, None] * X_sorted)[::-1], axis=0)[::-1]
    grad_sorted = status_sorted[:, None] * (X_sorted - num / denom[:, None])
    return -grad_sorted.sum(axis=0)


def loss_gradient_smooth_part(problem: FusedProblem, beta, partition) -> np.ndarray:
    """Gradient of the part of the objective that is differentiable given a partition.

    Given a partition of the coefficients into maximal equal-valued connected
    sets, the data-fit term plus the difference penalties on edges *crossing*
    set boundaries are differentiable; the intra-set difference penalties and
    the ``|beta_k|`` terms are excluded. Cross-edge signs are taken from the
    partition's per-set values, so callers never compare raw floats.

    ``partition`` must expose ``labels`` (set index per node) and ``values``
    (shared coefficient value per set) and be consistent with ``beta``.
    """
    beta = problem._check_beta(beta)
    labels = np.asarray(partition.labels)
    values = np.asarray(partition.values)
    if labels.shape[0] != problem.p:
        raise DimensionError("partition labels length does not match problem size")
    set_vals = values[labels]
    if np.any(np.abs(beta - set_vals) > 1e-9 * (1.0 + np.abs(beta))):
        raise DataError("partition is inconsistent with beta: set values disagree")
    grad = smooth_fit_gradient(problem, beta)
    g = problem.graph
    if g.m and problem.lambda2 > 0.0:
        a, b = g.edges[:, 0], g.edges[:, 1]
        cross = labels[a] != labels[b]
        if np.any(cross & (values[labels[a]] == values[labels[b]])):
            raise DataError("partition has a zero-difference cross edge")
        sgn = np.sign(values[labels[a]] - values[labels[b]])
        contrib = np.where(cross, problem.lambda2 * g.edge_weights * sgn, 0.0)
        np.add.at(grad, a, contrib)
        np.add.at(grad, b, -contrib)
    return grad
