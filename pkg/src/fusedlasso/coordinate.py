"""Naive coordinate-wise optimizer with active-set management.

Holding all other coefficients fixed, the objective restricted to one
coordinate is a convex piecewise quadratic whose derivative is an increasing
step function with positive jumps at 0 (weight ``lambda1 * w_k``) and at each
neighbor's value (weight ``lambda2 * w_kl``). The unique minimizer is found
exactly by locating the sign change of that derivative, so fused coordinates
land on identical floating-point values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import cd_expand, cd_sweeps
from .model import (
    SQUARED,
    DataError,
    FusedLassoError,
    FusedProblem,
    Solution,
    loss_value,
)


class ZeroColumnError(FusedLassoError):
    """Coordinate has zero column norm; its minimizer may not be unique."""


@dataclass(frozen=True)
class CdConfig:
    """Convergence controls for the coordinate sweeps.

    ``tol`` bounds the maximum absolute coordinate change per sweep at
    convergence; ``max_sweeps`` caps the total number of inner sweeps across
    the whole run.
    """

    tol: float = 1e-8
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not self.tol > 0:
            raise DataError("tol must be positive")
        if self.max_sweeps < 1:
            raise DataError("max_sweeps must be at least 1")


@dataclass(frozen=True)
class ActiveSet:
    """Coordinates currently swept by the inner loop."""

    members: frozenset[int]
    dirty: bool = False


def piecewise_min(a: float, b: float, positions: np.ndarray, jumps: np.ndarray) -> float:
    """Minimize ``0.5*a*(t-b)^2 + sum_i jumps[i]*|t - positions[i]|`` exactly.

    ``a`` must be positive and all jumps nonnegative. Coincident positions may
    appear; they are merged by summing their jumps, which keeps the derivative
    a valid step function.
    """
    if positions.size == 0:
        return b
    order = np.argsort(positions, kind="stable")
    pos = positions[order]
    jmp = jumps[order]
    if pos.size > 1:
        keep = np.empty(pos.size, dtype=bool)
        keep[0] = True
        np.not_equal(pos[1:], pos[:-1], out=keep[1:])
        if not keep.all():
            idx = np.cumsum(keep) - 1
            merged = np.zeros(int(idx[-1]) + 1)
            np.add.at(merged, idx, jmp)
            pos = pos[keep]
            jmp = merged
    total = jmp.sum()
    cum = np.cumsum(jmp)
    # derivative right of breakpoint j: a*(pos[j]-b) + (2*cum[j] - total); increasing in j
    rights = a * (pos - b) + (2.0 * cum - total)
    j = int(np.searchsorted(rights, 0.0, side="left"))
    if j == len(pos):
        return b - total / a
    if rights[j] - 2.0 * jmp[j] <= 0.0:
        return float(pos[j])
    shift = (2.0 * cum[j - 1] - total) if j > 0 else -total
    return b - shift / a


def _coordinate_inputs(problem: FusedProblem, beta: np.ndarray, k: int, rho: float):
    a = problem.column_sq_norms[k]
    if a <= 0.0:
        raise ZeroColumnError(f"column {k} has zero squared norm")
    b = rho / a
    if problem.lambda2 > 0.0:
        nbr, wts = problem.graph.neighbors(k)
    else:
        nbr, wts = np.empty(0, dtype=np.intp), np.empty(0)
    n_pen = nbr.size + (1 if problem.lambda1 > 0.0 else 0)
    positions = np.empty(n_pen)
    jumps = np.empty(n_pen)
    if nbr.size:
        positions[: nbr.size] = beta[nbr]
        jumps[: nbr.size] = problem.lambda2 * wts
    if problem.lambda1 > 0.0:
        positions[-1] = 0.0
        jumps[-1] = problem.lambda1 * problem.graph.node_weights[k]
    return a, b, positions, jumps


def coordinate_minimize(problem: FusedProblem, beta, k: int) -> float:
    """Exact minimizer of the objective over coordinate ``k``, others fixed.

    Returns the new value for ``beta[k]``; the move never increases the
    objective. Raises :class:`ZeroColumnError` when column ``k`` has zero
    squared norm.
    """
    beta = problem._check_beta(beta)
    if problem.loss != SQUARED:
        raise DataError("coordinate_minimize requires the squared loss")
    X = problem.weighted_X
    r = problem.weighted_y - X @ beta
    rho = float(X[:, k] @ r) + problem.column_sq_norms[k] * beta[k]
    a, b, positions, jumps = _coordinate_inputs(problem, beta, k, rho)
    return piecewise_min(a, b, positions, jumps)


def per_move_decrease_constant(problem: FusedProblem) -> float:
    """Lower-bound constant for the per-move objective decrease.

    Every exact coordinate move from ``beta`` to ``beta_hat`` satisfies
    ``g(beta_hat) <= g(beta) - c * (beta_k - beta_hat_k)**2`` with
    ``c = 0.5 * min_k (X^T X)_kk``: the one-dimensional derivative has slope
    ``(X^T X)_kk`` between its positive jumps, so integrating it away from the
    minimizer gives half that slope times the squared step.
    """
    return 0.5 * float(problem.column_sq_norms.min())


def naive_cd(
    problem: FusedProblem,
    beta0=None,
    config: CdConfig | None = None,
    *,
    all_coordinates: bool = False,
) -> Solution:
    """Cyclic exact coordinate descent with an active set.

    Sweeps the active set (coordinates that are or have become nonzero) in
    ascending index order until the largest per-sweep coordinate change drops
    below ``config.tol``, then admits every zero coordinate whose
    single-coordinate minimizer is nonzero and repeats until the active set is
    stable. The result is a coordinate-wise minimum up to the tolerance; it
    need not be the global optimum.

    ``all_coordinates=True`` disables the active-set logic and sweeps every
    coordinate, which is useful for equivalence checks.
    """
    cfg = config or CdConfig()
    if problem.loss != SQUARED:
        raise DataError("naive_cd requires the squared loss; GLM losses go through fit_glm")
    p = problem.p
    beta = np.zeros(p) if beta0 is None else np.array(np.asarray(beta0, dtype=float), copy=True)
    if beta.shape != (p,):
        raise DataError(f"beta0 has shape {beta.shape}, expected ({p},)")
    X = problem.weighted_X
    r = problem.weighted_y - X @ beta
    a = problem.column_sq_norms
    offsets, nbr, wts, _ = problem.graph._adjacency
    node_w = problem.graph.node_weights
    lam1, lam2 = problem.lambda1, problem.lambda2
    active = np.ones(p, dtype=bool) if all_coordinates else beta != 0.0
    sweeps = 0
    converged = True
    while True:
        order = np.flatnonzero(active)
        if order.size:
            if np.any(a[order] <= 0.0):
                k = int(order[np.argmax(a[order] <= 0.0)])
                raise ZeroColumnError(f"column {k} has zero squared norm")
            used, ok = cd_sweeps(
                X, r, beta, a, order, offsets, nbr, wts, node_w, lam1, lam2, cfg.tol, cfg.max_sweeps - sweeps
            )
            sweeps += used
            if not ok:
                converged = False
                break
        if all_coordinates:
            break
        candidates = np.flatnonzero(~active)
        if candidates.size == 0:
            break
        if np.any(a[candidates] <= 0.0):
            k = int(candidates[np.argmax(a[candidates] <= 0.0)])
            raise ZeroColumnError(f"column {k} has zero squared norm")
        grew = np.zeros(p, dtype=bool)
        if not cd_expand(X, r, beta, a, candidates, offsets, nbr, wts, node_w, lam1, lam2, grew):
            break
        active |= grew
    return Solution(
        beta=beta,
        objective=loss_value(problem, beta),
        iterations=sweeps,
        converged=converged,
    )
