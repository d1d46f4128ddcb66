"""Approximate solver: smoothed difference penalty as an un-sticking device.

The difference penalty ``|x|`` is replaced by a once-differentiable version
that is quadratic on ``[-1/M, 1/M]`` and linear (shifted down by ``1/(2M)``)
outside. Because the smoothed objective has no kinks across fused groups,
plain coordinate descent on it cannot get stuck the way it does on the exact
objective, so a few smoothed sweeps are enough to shear wrongly fused groups
apart. The exact objective (with fusion of equal neighbors, but no max-flow
splitting) is then re-optimized, and the procedure stops once a smoothed pass
reproduces the previous one. No global-optimality guarantee is made; the
returned solution carries a certificate residual for quality reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import huber_sweeps as kernel_huber_sweeps
from .coordinate import CdConfig, ZeroColumnError, naive_cd
from .fusion import FusedSets, _cd_with_polish, build_partition, certificate_from_flows, collapse
from .model import SQUARED, DataError, FusedProblem, Solution, loss_value


@dataclass(frozen=True)
class HuberConfig:
    """Controls for the smoothed passes.

    ``M`` is the smoothing sharpness (knee at ``1/M``), ``K`` the maximum
    number of smoothed sweeps per un-stick attempt, and ``epsilon`` the
    L1-change threshold between consecutive smoothed passes below which the
    solver stops. ``sweep_tol`` ends a smoothed pass early once a sweep moves
    no coordinate by more than it.
    """

    M: float = 1000.0
    K: int = 100
    epsilon: float = 1e-6
    sweep_tol: float = 1e-8

    def __post_init__(self):
        if not self.M > 0:
            raise DataError("M must be positive")
        if self.K < 1:
            raise DataError("K must be at least 1")
        if not self.epsilon > 0:
            raise DataError("epsilon must be positive")


def huber_penalty(x, M: float):
    """Smoothed absolute value: ``(M/2) x**2`` on ``[-1/M, 1/M]``, ``|x| - 1/(2M)`` outside.

    Continuous, differentiable, convex; satisfies ``0 <= |x| - p_M(x) <= 1/(2M)``.
    """
    if not M > 0:
        raise DataError("M must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= 1.0 / M, 0.5 * M * x * x, np.abs(x) - 0.5 / M)
    return float(out) if out.ndim == 0 else out


def smoothed_objective(problem: FusedProblem, beta, M: float) -> float:
    """Objective with every difference penalty smoothed; the L1 term stays exact."""
    beta = problem._check_beta(beta)
    g = problem.graph
    r = problem.weighted_y - problem.weighted_X @ beta
    total = 0.5 * float(r @ r) + problem.lambda1 * float(g.node_weights @ np.abs(beta))
    if g.m and problem.lambda2 > 0.0:
        diffs = beta[g.edges[:, 0]] - beta[g.edges[:, 1]]
        total += problem.lambda2 * float(g.edge_weights @ huber_penalty(diffs, M))
    return total


def _huber_coordinate_min(a, b, l1w, nbr_vals, nbr_caps, M):
    """Exact minimizer of ``0.5*a*(t-b)^2 + l1w*|t| + sum_e nbr_caps[e]*p_M(t - nbr_vals[e])``.

    The derivative is piecewise linear and strictly increasing (slope at least
    ``a``) with knots at the smoothing boundaries and a single jump at 0, so
    the root is found by scanning the knots on the correct side of 0 and
    solving the bracketing linear piece exactly.
    """

    def base(t):
        if nbr_vals.size:
            return a * (t - b) + float(nbr_caps @ np.clip(M * (t - nbr_vals), -1.0, 1.0))
        return a * (t - b)

    if l1w > 0.0:
        at0 = base(0.0)
        if at0 - l1w <= 0.0 <= at0 + l1w:
            return 0.0
        side = 1.0 if at0 + l1w < 0.0 else -1.0
        phi = lambda t: base(t) + side * l1w
        start = 0.0
    else:
        at0 = base(b)
        side = 1.0 if at0 < 0.0 else -1.0
        if at0 == 0.0:
            return b
        phi = base
        start = b
    knots = np.concatenate([nbr_vals - 1.0 / M, nbr_vals + 1.0 / M]) if nbr_vals.size else np.empty(0)
    if side > 0:
        knots = np.sort(knots[knots > start])
    else:
        knots = -np.sort(-knots[knots < start])
    prev_t = start
    prev_phi = phi(start)
    for t_k in knots:
        cur = phi(t_k)
        if (side > 0 and cur >= 0.0) or (side < 0 and cur <= 0.0):
            return prev_t + (t_k - prev_t) * (-prev_phi) / (cur - prev_phi)
        prev_t, prev_phi = float(t_k), cur
    # beyond the last knot every smoothed term is saturated; the slope is exactly a
    return prev_t - prev_phi / a


def huber_cd_sweeps(problem: FusedProblem, beta, config: HuberConfig | None = None) -> np.ndarray:
    """At most ``K`` coordinate sweeps on the smoothed objective, all coordinates.

    Each single-coordinate subproblem is solved exactly; the smoothed
    objective is non-increasing across every move. Returns the updated vector.
    """
    cfg = config or HuberConfig()
    if problem.loss != SQUARED:
        raise DataError("huber_cd_sweeps requires the squared loss")
    beta = np.array(problem._check_beta(beta), copy=True)
    a = problem.column_sq_norms
    if np.any(a <= 0.0):
        raise ZeroColumnError(f"column {int(np.argmax(a <= 0.0))} has zero squared norm")
    X = problem.weighted_X
    r = problem.weighted_y - X @ beta
    offsets, nbr, wts, _ = problem.graph._adjacency
    kernel_huber_sweeps(
        X,
        r,
        beta,
        a,
        offsets,
        nbr,
        wts,
        problem.graph.node_weights,
        problem.lambda1,
        problem.lambda2,
        cfg.M,
        cfg.K,
        cfg.sweep_tol,
    )
    return beta


def solve_huber(
    problem: FusedProblem,
    beta0=None,
    config: HuberConfig | None = None,
    cd_config: CdConfig | None = None,
    *,
    max_rounds: int | None = None,
    want_certificate: bool = True,
) -> Solution:
    """Approximate fused-lasso solve without any max-flow computations.

    Alternates exact coordinate descent on the problem collapsed by the
    current fused sets (always the full partition of equal, connected
    neighbors; never split) with smoothed sweeps on the uncollapsed problem
    whenever the fused sets stop changing. Smoothed passes run on the
    uncollapsed objective so wrongly fused groups can shear apart. The solver
    stops when a smoothed pass lands within ``epsilon`` (L1) of the previous
    one, and returns the best vector seen measured by the exact objective.
    """
    cfg = config or HuberConfig()
    cd_cfg = cd_config or CdConfig()
    if problem.loss != SQUARED:
        raise DataError("solve_huber requires the squared loss; GLM losses go through fit_glm")
    p = problem.p
    beta = np.zeros(p) if beta0 is None else np.array(np.asarray(beta0, dtype=float), copy=True)
    if beta.shape != (p,):
        raise DataError(f"beta0 has shape {beta.shape}, expected ({p},)")
    beta_save = beta.copy()
    fused = FusedSets.singletons(p)
    best_beta = beta.copy()
    best_obj = loss_value(problem, beta)
    cap = max_rounds if max_rounds is not None else max(10 * p, 50)
    total_sweeps = 0
    smoothed_passes = 0
    converged = False
    rounds = 0
    while rounds < cap:
        rounds += 1
        collapsed = collapse(problem, fused, validate=False)
        sol = _cd_with_polish(collapsed.problem, collapsed.restrict(beta), cd_cfg)
        total_sweeps += sol.iterations
        beta = collapsed.expand(sol.beta)
        obj = loss_value(problem, beta)
        if obj < best_obj:
            best_obj, best_beta = obj, beta.copy()
        partition = build_partition(problem.graph, beta)
        stuck = partition.signature() == fused.signature()
        fused = FusedSets.from_partition(partition)
        if not stuck:
            continue
        beta = huber_cd_sweeps(problem, beta, cfg)
        smoothed_passes += 1
        obj = loss_value(problem, beta)
        if obj < best_obj:
            best_obj, best_beta = obj, beta.copy()
        drift = float(np.abs(beta - beta_save).sum())
        beta_save = beta.copy()
        # refuse equal neighbors of the sheared vector before the next descent pass
        fused = FusedSets.from_partition(build_partition(problem.graph, beta))
        if drift < cfg.epsilon:
            converged = True
            break
    certificate = certificate_from_flows(problem, best_beta) if want_certificate else None
    return Solution(
        beta=best_beta,
        objective=best_obj,
        iterations=total_sweeps,
        converged=converged,
        certificate=certificate,
        diagnostics={"rounds": rounds, "smoothed_passes": smoothed_passes},
    )
