"""Exact solver: fuse equal neighboring coefficients, split sets via max flow.

Plain coordinate descent can stall at points where no single coordinate move
improves the objective but a joint move of several equal-valued coefficients
would. The cure is to optimize over *fused sets* (connected, equal-valued
groups treated as one variable) and to decide with a max-flow computation
whether a group must shear apart: put the group's nodes in a network, connect
each node to a source or sink according to the direction it is being pulled
(gradient plus sign-adjusted L1 weight), give internal edges capacity
``lambda2 * w_kl``, and read the residual graph at max flow. Nodes still
reachable from the source break off upward, nodes still reaching the sink
break off downward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coordinate import CdConfig, naive_cd
from .flow import FlowNetwork
from .model import (
    SQUARED,
    DataError,
    FusedProblem,
    OptimalityCertificate,
    PenaltyGraph,
    Solution,
    loss_gradient_smooth_part,
    loss_value,
    smooth_fit_gradient,
)

#: relative tolerance under which two adjacent coefficients count as equal
VALUE_EQ_RTOL = 1e-9

WHOLE = "whole"
PLUS = "plus"
MINUS = "minus"
ZERO = "zero"


@dataclass(frozen=True)
class Partition:
    """Maximal equal-valued connected sets induced by a coefficient vector.

    ``sets`` are disjoint, cover ``0..p-1``, are each connected in the penalty
    graph, and are ordered by smallest member; ``values[i]`` is the shared
    coefficient value of set ``i`` and ``labels[k]`` the set index of node ``k``.
    """

    sets: tuple[np.ndarray, ...]
    values: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.sets)

    def signature(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(i) for i in s) for s in self.sets)


@dataclass(frozen=True)
class FusedSets:
    """Working collection of fused sets, each tagged with how it arose."""

    sets: tuple[np.ndarray, ...]
    provenance: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.sets)

    def signature(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(i) for i in s) for s in self.sets)

    @classmethod
    def singletons(cls, p: int) -> "FusedSets":
        return cls(tuple(np.array([k], dtype=np.intp) for k in range(p)), (WHOLE,) * p)

    @classmethod
    def from_partition(cls, partition: Partition) -> "FusedSets":
        return cls(partition.sets, (WHOLE,) * len(partition.sets))


def build_partition(graph: PenaltyGraph, beta, rel_tol: float = VALUE_EQ_RTOL) -> Partition:
    """Partition nodes into maximal sets that are connected through equal values.

    Two adjacent nodes belong together when their coefficients agree within
    ``rel_tol * (1 + max(|beta_k|, |beta_l|))``; sets are the connected
    components of the subgraph these edges induce.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (graph.p,):
        raise DataError(f"beta has shape {beta.shape}, expected ({graph.p},)")
    p = graph.p
    parent = np.arange(p, dtype=np.intp)

    def find(k: int) -> int:
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    if graph.m:
        a, b = graph.edges[:, 0], graph.edges[:, 1]
        ba, bb = beta[a], beta[b]
        equal = np.abs(ba - bb) <= rel_tol * (1.0 + np.maximum(np.abs(ba), np.abs(bb)))
        for e in np.flatnonzero(equal):
            ra, rb = find(int(a[e])), find(int(b[e]))
            if ra != rb:
                # attach the larger root so every root is its set's smallest member
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    roots = np.array([find(k) for k in range(p)], dtype=np.intp)
    unique_roots, labels = np.unique(roots, return_inverse=True)
    labels = labels.astype(np.intp)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(unique_roots.size + 1))
    sets = tuple(np.sort(order[bounds[i]:bounds[i + 1]]) for i in range(unique_roots.size))
    return Partition(sets, beta[unique_roots].astype(float), labels)


def _normalize_sets(fused_sets) -> tuple[np.ndarray, ...]:
    if isinstance(fused_sets, FusedSets):
        return fused_sets.sets
    if isinstance(fused_sets, Partition):
        return fused_sets.sets
    return tuple(np.asarray(s, dtype=np.intp) for s in fused_sets)


@dataclass(frozen=True)
class CollapsedProblem:
    """One variable per fused set: summed columns, summed weights, quotient graph."""

    problem: FusedProblem
    sets: tuple[np.ndarray, ...]
    labels: np.ndarray
    original: FusedProblem

    def expand(self, beta_collapsed) -> np.ndarray:
        """Map a collapsed coefficient vector back to full length."""
        beta_collapsed = np.asarray(beta_collapsed, dtype=float)
        return beta_collapsed[self.labels]

    def restrict(self, beta) -> np.ndarray:
        """Representative value of each set, read off a full-length vector."""
        beta = np.asarray(beta, dtype=float)
        return np.array([beta[s[0]] for s in self.sets])


def collapse(problem: FusedProblem, fused_sets, *, validate: bool = True) -> CollapsedProblem:
    """Constrain all coefficients within each fused set to be equal.

    The constrained problem over the full coefficient vector is equivalent to
    an unconstrained one with one variable per set: its design columns are
    the sums of the member columns, its node weight the sum of member node
    weights, and two sets are joined by an edge carrying the summed weight of
    all original edges crossing between them.
    """
    if problem.loss != SQUARED:
        raise DataError("collapse requires the squared loss")
    sets = _normalize_sets(fused_sets)
    g = problem.graph
    labels = np.full(problem.p, -1, dtype=np.intp)
    for i, s in enumerate(sets):
        if s.size == 0:
            raise DataError(f"fused set {i} is empty")
        if np.any(labels[s] >= 0):
            raise DataError("fused sets overlap")
        labels[s] = i
    if np.any(labels < 0):
        raise DataError("fused sets do not cover all coefficients")
    if validate:
        for i, s in enumerate(sets):
            if len(g.connected_components(s)) != 1:
                raise DataError(f"fused set {i} is not connected in the penalty graph")
    m = len(sets)
    X = problem.weighted_X
    Xt = np.empty((problem.n, m), order="F")
    node_w = np.empty(m)
    for i, s in enumerate(sets):
        Xt[:, i] = X[:, s].sum(axis=1) if s.size > 1 else X[:, s[0]]
        node_w[i] = g.node_weights[s].sum()
    edge_acc: dict[tuple[int, int], float] = {}
    for e in range(g.m):
        a, b = labels[g.edges[e, 0]], labels[g.edges[e, 1]]
        if a == b:
            continue
        key = (a, b) if a < b else (b, a)
        edge_acc[key] = edge_acc.get(key, 0.0) + g.edge_weights[e]
    if edge_acc:
        keys = sorted(edge_acc)
        edges_t = np.array(keys, dtype=np.intp)
        ew_t = np.array([edge_acc[k] for k in keys])
    else:
        edges_t = np.empty((0, 2), dtype=np.intp)
        ew_t = np.empty(0)
    collapsed = FusedProblem(
        X=Xt,
        y=problem.weighted_y,
        graph=PenaltyGraph(p=m, node_weights=node_w, edges=edges_t, edge_weights=ew_t),
        lambda1=problem.lambda1,
        lambda2=problem.lambda2,
        loss=SQUARED,
    )
    return CollapsedProblem(problem=collapsed, sets=sets, labels=labels, original=problem)


def _pull_network(sub_edges: np.ndarray, sub_weights: np.ndarray, pulls: np.ndarray, lambda2: float):
    """Source/sink-augmented network over one set; returns (network, internal arc ids)."""
    q = pulls.shape[0]
    s, r = q, q + 1
    net = FlowNetwork(q + 2, source=s, sink=r)
    arc_ids = np.empty(sub_edges.shape[0], dtype=np.intp)
    for e in range(sub_edges.shape[0]):
        a, b = sub_edges[e]
        arc_ids[e] = net.add_edge(int(a), int(b), lambda2 * sub_weights[e], lambda2 * sub_weights[e])
    for k in range(q):
        if pulls[k] < 0.0:
            net.add_edge(s, k, -pulls[k])
        elif pulls[k] > 0.0:
            net.add_edge(k, r, pulls[k])
    net.max_flow()
    return net, arc_ids


def split_set(
    problem: FusedProblem,
    beta,
    partition: Partition,
    set_index: int,
    mode: str,
    *,
    smooth_grad: np.ndarray | None = None,
    pull_tol: float = 0.0,
) -> list[tuple[np.ndarray, str]]:
    """Decide whether one partition set must break apart, and into what.

    ``mode="active"`` (all coefficients in the set nonzero) pulls each node by
    the smooth gradient plus the sign-adjusted L1 weight and reads the
    residual reachability of a single network. ``mode="inactive"`` (all zero)
    must overcome the L1 penalty in either direction, so two networks are
    built, one assuming the set turns positive, one negative.

    Pulls with magnitude at most ``pull_tol`` count as zero (no source or
    sink arc); callers checking a point produced by an iterative solver set
    this to the solver's stationarity noise so leftover gradient dust does
    not masquerade as a split.

    Returns ``[(component, tag)]`` pairs where the tag records whether the
    component breaks upward ("plus"), downward ("minus"), stays put ("zero"),
    or the set survives whole ("whole"). Components are connected.
    """
    beta = problem._check_beta(beta)
    nodes = partition.sets[set_index]
    value = partition.values[set_index]
    if mode not in ("active", "inactive"):
        raise DataError(f"unknown split mode {mode!r}")
    if mode == "active" and value == 0.0:
        raise DataError("active split requires nonzero coefficients on the set")
    if mode == "inactive" and value != 0.0:
        raise DataError("inactive split requires zero coefficients on the set")
    if smooth_grad is None:
        smooth_grad = loss_gradient_smooth_part(problem, beta, partition)
    g = problem.graph
    sub, node_map, _ = g.subgraph(nodes)
    l1w = problem.lambda1 * g.node_weights[node_map]
    grad = smooth_grad[node_map]
    pos_in_set = {int(n): i for i, n in enumerate(node_map)}

    def reach(pulls: np.ndarray):
        if pull_tol > 0.0:
            pulls = np.where(np.abs(pulls) <= pull_tol, 0.0, pulls)
        net, _ = _pull_network(sub.edges, sub.edge_weights, pulls, problem.lambda2)
        return net.residual_reachability()

    if mode == "active":
        pulls = grad + l1w * np.sign(value)
        rr = reach(pulls)
        plus = {int(node_map[i]) for i in rr.from_source if i < len(node_map)}
        minus = {int(node_map[i]) for i in rr.to_sink if i < len(node_map)}
    else:
        rr_plus = reach(grad + l1w)
        rr_minus = reach(grad - l1w)
        plus = {int(node_map[i]) for i in rr_plus.from_source if i < len(node_map)}
        minus = {int(node_map[i]) for i in rr_minus.to_sink if i < len(node_map)}
    # the sides cannot overlap at exact max flow (an overlap would be an
    # augmenting path); epsilon-level slack can still produce one, and the
    # subsets must stay disjoint
    minus -= plus
    if not plus and not minus:
        return [(nodes, WHOLE)]
    rest = [int(n) for n in nodes if int(n) not in plus and int(n) not in minus]
    out: list[tuple[np.ndarray, str]] = []
    for subset, tag in ((sorted(plus), PLUS), (sorted(minus), MINUS), (rest, ZERO)):
        if subset:
            for comp in g.connected_components(np.asarray(subset, dtype=np.intp)):
                out.append((comp, tag))
    out.sort(key=lambda item: int(item[0][0]))
    return out


_RULE_FUSE = "fuse"
_RULE_SPLIT_ACTIVE = "split-active"
_RULE_SPLIT_INACTIVE = "split-inactive"


def _apply_splits(problem, beta, partition, mode: str, pull_tol: float) -> FusedSets:
    smooth_grad = loss_gradient_smooth_part(problem, beta, partition)
    sets: list[np.ndarray] = []
    tags: list[str] = []
    for i, nodes in enumerate(partition.sets):
        is_active = partition.values[i] != 0.0
        applicable = (mode == "active") == is_active
        if not applicable or nodes.size == 1:
            # a singleton can never shear: any split of it is itself
            sets.append(nodes)
            tags.append(WHOLE)
            continue
        parts = split_set(problem, beta, partition, i, mode, smooth_grad=smooth_grad, pull_tol=pull_tol)
        for comp, tag in parts:
            sets.append(comp)
            tags.append(tag)
    order = np.argsort([int(s[0]) for s in sets])
    return FusedSets(tuple(sets[i] for i in order), tuple(tags[i] for i in order))


def stationarity_noise(problem: FusedProblem, tol: float) -> float:
    """Gradient noise floor left by a coordinate solver converged to ``tol``."""
    return tol * max(1.0, float(problem.column_sq_norms.max()))


def _pattern_polish(problem: FusedProblem, beta: np.ndarray) -> np.ndarray | None:
    """One pattern-restricted quadratic jump, line-searched on the true objective.

    With zeros held at zero and every absolute-value term linearized at its
    current sign, the objective on the nonzero coordinates is quadratic plus
    linear. A ridge-damped solve of that model yields a direction whose
    largest components lie along the soft (nearly flat) curvature directions
    where coordinate sweeps only crawl; the exact objective is then minimized
    along the ray, which is a one-dimensional convex function. Purely an
    accelerator: returns None unless the move strictly decreases the exact
    objective, and callers re-run coordinate descent afterwards, so no
    optimality reasoning relies on it.
    """
    active = np.flatnonzero(beta)
    if active.size == 0:
        return None
    g = problem.graph
    signs = np.sign(beta)
    grad_pen = problem.lambda1 * g.node_weights * signs
    if g.m and problem.lambda2 > 0.0:
        a, b = g.edges[:, 0], g.edges[:, 1]
        t = np.sign(beta[a] - beta[b])  # equal pairs contribute nothing here
        contrib = problem.lambda2 * g.edge_weights * t
        np.add.at(grad_pen, a, contrib)
        np.add.at(grad_pen, b, -contrib)
    X = problem.weighted_X[:, active]
    G = X.T @ X
    h = X.T @ problem.weighted_y - grad_pen[active]
    ridge = 1e-10 * (1.0 + float(np.trace(G)) / active.size)
    try:
        solution = np.linalg.solve(G + ridge * np.eye(active.size), h)
    except np.linalg.LinAlgError:
        solution = np.linalg.lstsq(G, h, rcond=None)[0]
    candidate = np.array(beta, copy=True)
    candidate[active] = solution
    f0 = loss_value(problem, beta)
    if loss_value(problem, candidate) < f0:
        return candidate
    # the full jump overshot a kink; minimize the exact objective on the ray
    direction = candidate - beta

    def along(t: float) -> float:
        return loss_value(problem, beta + t * direction)

    lo, hi = 0.0, 1.0
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    m1 = hi - inv_phi * (hi - lo)
    m2 = lo + inv_phi * (hi - lo)
    f1, f2 = along(m1), along(m2)
    for _ in range(60):
        if f1 <= f2:
            hi, m2, f2 = m2, m1, f1
            m1 = hi - inv_phi * (hi - lo)
            f1 = along(m1)
        else:
            lo, m1, f1 = m1, m2, f2
            m2 = lo + inv_phi * (hi - lo)
            f2 = along(m2)
    t_best = m1 if f1 <= f2 else m2
    f_best = min(f1, f2)
    if f_best < f0 and t_best > 0.0:
        return beta + t_best * direction
    return None


def _cd_with_polish(problem: FusedProblem, beta0: np.ndarray, cfg: CdConfig) -> Solution:
    """Coordinate descent to convergence, accelerated by pattern polishes."""
    sol = naive_cd(problem, beta0, cfg)
    sweeps = sol.iterations
    for _ in range(3):
        if not sol.converged:
            break
        polished = _pattern_polish(problem, sol.beta)
        if polished is None:
            break
        nxt = naive_cd(problem, polished, cfg)
        sweeps += nxt.iterations
        if nxt.objective >= sol.objective:
            break
        sol = nxt
    return Solution(
        beta=sol.beta,
        objective=sol.objective,
        iterations=sweeps,
        converged=sol.converged,
    )


def solve_exact(
    problem: FusedProblem,
    beta0=None,
    config: CdConfig | None = None,
    *,
    max_rounds: int | None = None,
    want_certificate: bool = True,
) -> Solution:
    """Globally optimal fused-lasso solve for the squared loss.

    Alternates coordinate descent on the collapsed problem with updates of the
    fused sets, applying the cheapest rule that can still make progress:
    refuse any splitting and simply fuse equal neighbors while the coefficients
    keep moving; once they stop, run the max-flow split check on the active
    (nonzero) sets; once that stops producing changes, check the inactive
    sets. The run ends when no rule changes the fused sets, at which point the
    partition equals the fused sets and a subgradient certificate built from
    the final flows witnesses global optimality.
    """
    cfg = config or CdConfig()
    if problem.loss != SQUARED:
        raise DataError("solve_exact requires the squared loss; GLM losses go through fit_glm")
    p = problem.p
    beta = np.zeros(p) if beta0 is None else np.array(np.asarray(beta0, dtype=float), copy=True)
    if beta.shape != (p,):
        raise DataError(f"beta0 has shape {beta.shape}, expected ({p},)")
    fused = FusedSets.singletons(p)
    last_rule: str | None = None
    pull_tol = stationarity_noise(problem, cfg.tol)
    cap = max_rounds if max_rounds is not None else max(10 * p, 20)
    total_sweeps = 0
    rounds = 0
    converged = True
    events: list[dict] = []
    partition = None
    while True:
        if rounds >= cap:
            converged = False
            break
        rounds += 1
        collapsed = collapse(problem, fused, validate=False)
        sol = _cd_with_polish(collapsed.problem, collapsed.restrict(beta), cfg)
        total_sweeps += sol.iterations
        if not sol.converged:
            converged = False
            beta = collapsed.expand(sol.beta)
            break
        new_beta = collapsed.expand(sol.beta)
        changed = bool(np.max(np.abs(new_beta - beta)) > cfg.tol) if p else False
        beta = new_beta
        partition = build_partition(problem.graph, beta)
        if changed or last_rule is None:
            rule = _RULE_FUSE
            new_fused = FusedSets.from_partition(partition)
        elif last_rule == _RULE_FUSE:
            rule = _RULE_SPLIT_ACTIVE
            new_fused = _apply_splits(problem, beta, partition, "active", pull_tol)
        elif last_rule == _RULE_SPLIT_ACTIVE:
            rule = _RULE_SPLIT_INACTIVE
            new_fused = _apply_splits(problem, beta, partition, "inactive", pull_tol)
        else:
            events.append(
                {
                    "round": rounds,
                    "rule": "stop",
                    "objective": loss_value(problem, beta),
                    "beta_changed": False,
                    "split_occurred": False,
                }
            )
            break
        split_occurred = rule != _RULE_FUSE and new_fused.signature() != partition.signature()
        events.append(
            {
                "round": rounds,
                "rule": rule,
                "objective": loss_value(problem, beta),
                "beta_changed": changed,
                "split_occurred": split_occurred,
            }
        )
        fused = new_fused
        last_rule = rule
    certificate = None
    if want_certificate and converged:
        certificate = certificate_from_flows(problem, beta, partition)
    return Solution(
        beta=beta,
        objective=loss_value(problem, beta),
        iterations=total_sweeps,
        converged=converged,
        certificate=certificate,
        diagnostics={"rounds": rounds, "events": events},
    )


def certificate_from_flows(
    problem: FusedProblem,
    beta,
    partition: Partition | None = None,
    *,
    smooth_grad: np.ndarray | None = None,
) -> OptimalityCertificate:
    """Best-effort subgradient multipliers ``(s, t)`` at ``beta``, from flows.

    Cross-partition edges take the sign of the value difference. Within an
    active set the multipliers come from the pull network's flows,
    ``t_kl = f_kl / (lambda2 * w_kl)``. Within a zero-valued set (with
    ``lambda1 > 0``) the multipliers solve a small auxiliary fused-lasso
    problem over the s variables whose stationarity condition is exactly the
    one required here. All multipliers are clipped to ``[-1, 1]``; at a true
    optimum the reported ``max_residual`` is at solver-noise level, away from
    one it is genuinely large.

    ``smooth_grad`` overrides the gradient of the data-fit term, which lets
    GLM callers pass a numeric gradient of their likelihood.
    """
    beta = problem._check_beta(beta)
    if partition is None:
        partition = build_partition(problem.graph, beta)
    g = problem.graph
    fit_grad = smooth_fit_gradient(problem, beta) if smooth_grad is None else np.asarray(smooth_grad, dtype=float)
    grad_h = fit_grad.copy()
    lam1, lam2 = problem.lambda1, problem.lambda2
    labels, values = partition.labels, partition.values
    t = np.zeros(g.m)
    s = np.zeros(problem.p)
    if g.m:
        a, b = g.edges[:, 0], g.edges[:, 1]
        cross = labels[a] != labels[b]
        t[cross] = np.sign(values[labels[a][cross]] - values[labels[b][cross]])
        if lam2 > 0.0:
            contrib = np.where(cross, lam2 * g.edge_weights * t, 0.0)
            np.add.at(grad_h, a, contrib)
            np.add.at(grad_h, b, -contrib)
    for i, nodes in enumerate(partition.sets):
        value = values[i]
        sub, node_map, edge_ids = g.subgraph(nodes)
        if value != 0.0 or lam1 == 0.0:
            sgn = float(np.sign(value))
            s[node_map] = sgn
            if sub.m and lam2 > 0.0:
                pulls = grad_h[node_map] + lam1 * g.node_weights[node_map] * sgn
                net, arc_ids = _pull_network(sub.edges, sub.edge_weights, pulls, lam2)
                for e_local, e_orig in enumerate(edge_ids):
                    t[e_orig] = np.clip(net.net_flow(int(arc_ids[e_local])) / (lam2 * g.edge_weights[e_orig]), -1.0, 1.0)
        else:
            scale = np.sqrt(lam1 * g.node_weights[node_map])
            aux = FusedProblem(
                X=np.diag(scale),
                y=-grad_h[node_map] / scale,
                graph=PenaltyGraph(
                    p=node_map.size,
                    node_weights=np.ones(node_map.size),
                    edges=sub.edges,
                    edge_weights=sub.edge_weights,
                ),
                lambda1=0.0,
                lambda2=lam2,
            )
            aux_sol = solve_exact(aux, want_certificate=False)
            s[node_map] = np.clip(aux_sol.beta, -1.0, 1.0)
            if sub.m:
                aux_cert = certificate_from_flows(aux, aux_sol.beta)
                t[edge_ids] = aux_cert.t
    residual = fit_grad + lam1 * g.node_weights * s
    if g.m and lam2 > 0.0:
        a, b = g.edges[:, 0], g.edges[:, 1]
        contrib = lam2 * g.edge_weights * t
        np.add.at(residual, a, contrib)
        np.add.at(residual, b, -contrib)
    return OptimalityCertificate(s=s, t=t, max_residual=float(np.max(np.abs(residual))) if problem.p else 0.0)
