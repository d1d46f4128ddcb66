"""Accuracy metrics, optimality checking, and an independent smoothed oracle.

The oracle deliberately shares no code with the coordinate/fusion/flow
solvers: it minimizes a fully smoothed version of the objective (both the L1
term and the difference terms) with a damped Newton method and certifies how
far its objective can be from the true optimum via an explicit gap bound, so
it can referee the other solvers in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coordinate import coordinate_minimize
from .fusion import (
    Partition,
    build_partition,
    certificate_from_flows,
    collapse,
    split_set,
    stationarity_noise,
)
from .model import (
    SQUARED,
    DataError,
    FusedProblem,
    OptimalityCertificate,
    fit_value,
    loss_value,
)

# ---------------------------------------------------------------------------
# error metrics


def err_l1_mean(x: np.ndarray) -> float:
    """Mean absolute entry, ``||x||_1 / p``."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(x).mean())


def err_rmse(x: np.ndarray) -> float:
    """Root mean squared entry."""
    x = np.asarray(x, dtype=float)
    return float(np.sqrt((x * x).mean()))


def err_linf(x: np.ndarray) -> float:
    """Largest absolute entry."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(x).max())


@dataclass(frozen=True)
class ErrReport:
    """Worst-case coefficient errors between two solution paths.

    The headline numbers are the worst value of each metric over all grid
    cells present in both paths; ``per_cell`` maps ``(lambda2_index,
    lambda1_index)`` to the cell's ``(l1_mean, rmse, linf)`` triple.
    """

    l1_mean: float
    rmse: float
    linf: float
    n_cells: int
    per_cell: dict[tuple[int, int], tuple[float, float, float]]


def accuracy_report(reference, candidate, grid=None) -> ErrReport:
    """Worst-over-grid error of ``candidate`` against ``reference``.

    Both paths must have been computed on identical grids; the comparison is
    restricted to cells where both produced a solution (skipped or failed
    cells are left out).
    """
    ref_grid = reference.grid if grid is None else grid
    if not (
        np.array_equal(ref_grid.lambda1_values, candidate.grid.lambda1_values)
        and np.array_equal(ref_grid.lambda2_values, candidate.grid.lambda2_values)
    ):
        raise DataError("paths were not computed on identical grids")
    per_cell: dict[tuple[int, int], tuple[float, float, float]] = {}
    worst = [0.0, 0.0, 0.0]
    for key, ref_cell in reference.cells.items():
        cand_cell = candidate.cells.get(key)
        if ref_cell.beta is None or cand_cell is None or cand_cell.beta is None:
            continue
        delta = ref_cell.beta - cand_cell.beta
        triple = (err_l1_mean(delta), err_rmse(delta), err_linf(delta))
        per_cell[key] = triple
        for j in range(3):
            worst[j] = max(worst[j], triple[j])
    if not per_cell:
        raise DataError("the two paths share no comparable cells")
    return ErrReport(l1_mean=worst[0], rmse=worst[1], linf=worst[2], n_cells=len(per_cell), per_cell=per_cell)


# ---------------------------------------------------------------------------
# optimality checking


@dataclass(frozen=True)
class Violation:
    """One reason a point is not optimal: a coordinate move or a possible split."""

    kind: str  # "coordinate", "split-active" or "split-inactive"
    set_index: int
    nodes: tuple[int, ...]
    detail: str


@dataclass(frozen=True)
class CheckResult:
    optimal: bool
    certificate: OptimalityCertificate | None
    violations: tuple[Violation, ...]
    partition: Partition


def check_optimality(problem: FusedProblem, beta, tol: float = 1e-8) -> CheckResult:
    """Operational global-optimality check for the squared loss.

    Builds the partition of ``beta`` into maximal equal-valued connected sets,
    verifies that no collapsed coordinate can move by more than ``tol`` and
    that no set splits under its applicable split mode, and on success
    constructs a subgradient certificate from the final flows. All violations
    found are reported, so a refutation names every offending set.
    """
    beta = problem._check_beta(beta)
    partition = build_partition(problem.graph, beta)
    collapsed = collapse(problem, partition.sets, validate=False)
    beta_c = collapsed.restrict(beta)
    pull_tol = stationarity_noise(problem, tol)
    violations: list[Violation] = []
    for i in range(len(partition.sets)):
        new = coordinate_minimize(collapsed.problem, beta_c, i)
        if abs(new - beta_c[i]) > tol:
            violations.append(
                Violation(
                    kind="coordinate",
                    set_index=i,
                    nodes=tuple(int(k) for k in partition.sets[i]),
                    detail=f"collapsed coordinate moves from {beta_c[i]:.6g} to {new:.6g}",
                )
            )
    for i, nodes in enumerate(partition.sets):
        mode = "active" if partition.values[i] != 0.0 else "inactive"
        parts = split_set(problem, beta, partition, i, mode, pull_tol=pull_tol)
        # a "split" that returns the whole set leaves the fused sets unchanged;
        # the descent direction it signals, if any, is a collapsed coordinate
        # move and is caught above
        if len(parts) > 1:
            tags = ", ".join(f"{tag}:{list(map(int, comp))}" for comp, tag in parts)
            violations.append(
                Violation(
                    kind=f"split-{mode}",
                    set_index=i,
                    nodes=tuple(int(k) for k in nodes),
                    detail=f"set shears into {tags}",
                )
            )
    if violations:
        return CheckResult(optimal=False, certificate=None, violations=tuple(violations), partition=partition)
    certificate = certificate_from_flows(problem, beta, partition)
    return CheckResult(optimal=True, certificate=certificate, violations=(), partition=partition)


def numeric_fit_gradient(problem: FusedProblem, beta, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of the data-fit term (loss-family agnostic)."""
    beta = np.array(problem._check_beta(beta), copy=True)
    grad = np.empty(problem.p)
    for k in range(problem.p):
        orig = beta[k]
        beta[k] = orig + step
        up = fit_value(problem, beta)
        beta[k] = orig - step
        down = fit_value(problem, beta)
        beta[k] = orig
        grad[k] = (up - down) / (2.0 * step)
    return grad


def glm_kkt_certificate(problem: FusedProblem, beta, step: float = 1e-6) -> OptimalityCertificate:
    """Subgradient certificate for a GLM fit, using a numeric fit gradient.

    The stationarity residual it reports measures how far ``beta`` is from
    satisfying the penalized likelihood's first-order conditions.
    """
    grad = numeric_fit_gradient(problem, beta, step=step)
    return certificate_from_flows(problem, beta, smooth_grad=grad)


# ---------------------------------------------------------------------------
# smoothed oracle


@dataclass(frozen=True)
class OracleResult:
    """Reference solution with an explicit bound on its objective suboptimality.

    ``objective_oracle`` is the exact objective at ``beta_oracle``;
    ``certified_gap`` bounds ``objective_oracle - (true minimum)``. The gap is
    the smoothing bound ``(lambda1*sum(w_k) + lambda2*sum(w_kl)) / (2M)`` plus
    the achieved gradient norm times a coarse diameter bound, so a run that
    hits its iteration cap reports a larger gap rather than failing silently.
    """

    beta_oracle: np.ndarray
    objective_oracle: float
    certified_gap: float
    grad_norm: float
    iterations: int
    converged: bool


def _fully_smoothed_parts(problem: FusedProblem, M: float):
    X = np.ascontiguousarray(problem.weighted_X)
    y = problem.weighted_y
    g = problem.graph
    XtX = X.T @ X
    Xty = X.T @ y
    yty = float(y @ y)
    lam1, lam2 = problem.lambda1, problem.lambda2
    wn = g.node_weights
    a, b = (g.edges[:, 0], g.edges[:, 1]) if g.m else (np.empty(0, np.intp), np.empty(0, np.intp))
    we = g.edge_weights

    def p_m(x):
        ax = np.abs(x)
        return np.where(ax <= 1.0 / M, 0.5 * M * x * x, ax - 0.5 / M)

    def value(beta):
        quad = 0.5 * (beta @ (XtX @ beta)) - Xty @ beta + 0.5 * yty
        total = quad + lam1 * float(wn @ p_m(beta))
        if a.size:
            total += lam2 * float(we @ p_m(beta[a] - beta[b]))
        return float(total)

    def gradient(beta):
        grad = XtX @ beta - Xty + lam1 * wn * np.clip(M * beta, -1.0, 1.0)
        if a.size:
            contrib = lam2 * we * np.clip(M * (beta[a] - beta[b]), -1.0, 1.0)
            np.add.at(grad, a, contrib)
            np.add.at(grad, b, -contrib)
        return grad

    def hessian(beta):
        H = XtX.copy()
        idx = np.arange(problem.p)
        H[idx, idx] += lam1 * M * wn * (np.abs(beta) <= 1.0 / M)
        if a.size:
            active = np.abs(beta[a] - beta[b]) <= 1.0 / M
            for e in np.flatnonzero(active):
                c = lam2 * M * we[e]
                i, j = a[e], b[e]
                H[i, i] += c
                H[j, j] += c
                H[i, j] -= c
                H[j, i] -= c
        return H

    return value, gradient, hessian


def smoothed_oracle(
    problem: FusedProblem,
    M: float = 1e8,
    grad_tol: float = 1e-10,
    max_iter: int = 300,
    beta0=None,
) -> OracleResult:
    """Independent reference solve via a fully smoothed objective.

    Both penalty terms are replaced by their smoothed versions (the L1 term
    too, unlike the approximate solver) so the objective is differentiable
    everywhere; it is minimized with a damped Newton iteration with
    backtracking until the gradient norm reaches ``grad_tol`` or progress
    stalls at the floating-point floor. Intended for desk-scale problems
    (roughly ``p <= 50``).
    """
    if problem.loss != SQUARED:
        raise DataError("smoothed_oracle supports the squared loss only")
    value, gradient, hessian = _fully_smoothed_parts(problem, M)
    p = problem.p
    beta = np.zeros(p) if beta0 is None else np.array(np.asarray(beta0, dtype=float), copy=True)
    f = value(beta)
    grad = gradient(beta)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            break
        H = hessian(beta)
        mu = 1e-12 * (1.0 + float(np.trace(H)) / p)
        try:
            direction = np.linalg.solve(H + mu * np.eye(p), -grad)
        except np.linalg.LinAlgError:
            direction = -grad
        slope = float(grad @ direction)
        if slope >= 0.0:
            direction = -grad
            slope = -float(grad @ grad)
        step = 1.0
        improved = False
        while step >= 1e-20:
            cand = beta + step * direction
            f_cand = value(cand)
            if f_cand <= f + 1e-4 * step * slope:
                beta, f = cand, f_cand
                improved = True
                break
            step *= 0.5
        if not improved:
            break  # at the floating-point floor; the reported gap absorbs it
        grad = gradient(beta)
    gnorm = float(np.linalg.norm(grad))
    g = problem.graph
    smoothing_gap = (problem.lambda1 * float(g.node_weights.sum()) + problem.lambda2 * float(g.edge_weights.sum())) / (
        2.0 * M
    )
    beta_ls = np.linalg.lstsq(problem.weighted_X, problem.weighted_y, rcond=None)[0]
    diameter = 2.0 * (1.0 + float(np.linalg.norm(beta)) + float(np.linalg.norm(beta_ls)))
    return OracleResult(
        beta_oracle=beta,
        objective_oracle=loss_value(problem, beta),
        certified_gap=smoothing_gap + gnorm * diameter,
        grad_norm=gnorm,
        iterations=iterations,
        converged=gnorm <= grad_tol,
    )
