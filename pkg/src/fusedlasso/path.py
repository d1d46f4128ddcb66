"""Regularization paths over exponential penalty grids with warm starts.

The grid spans four decades below each penalty's critical value: the smallest
``lambda1`` that zeroes every coefficient (at ``lambda2 = 0``) and the
smallest ``lambda2`` that fuses all coefficients into one value (at
``lambda1 = 0``). Rows (fixed ``lambda2``) are traversed with ``lambda1``
descending so each cell warm-starts from its sparser neighbor; a row is
abandoned once a solution carries more than ``2n`` nonzeros, and the
remaining cells are recorded as skipped rather than dropped.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coordinate import CdConfig, naive_cd
from .fusion import build_partition, certificate_from_flows, collapse, solve_exact, split_set
from .glm import cox_quadratic, CoxData, logistic_working_response
from .huber import HuberConfig, solve_huber
from .model import COX, LOGISTIC, SQUARED, DataError, FusedProblem, Solution

LAMBDA_RANGE_DECADES = 1e-4  # grids span [lambda_max * 1e-4, lambda_max]
N_LAMBDA2 = 20
N_LAMBDA1 = 50


@dataclass(frozen=True)
class PathGrid:
    """Exponential penalty grids; values are stored strictly increasing."""

    lambda1_values: np.ndarray
    lambda2_values: np.ndarray

    def __post_init__(self):
        for name in ("lambda1_values", "lambda2_values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size < 1:
                raise DataError(f"{name} must be a non-empty vector")
            if np.any(np.diff(arr) <= 0):
                raise DataError(f"{name} must be strictly increasing")
            if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise DataError(f"{name} must be positive and finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def build(cls, lambda1_max: float, lambda2_max: float, n1: int = N_LAMBDA1, n2: int = N_LAMBDA2) -> "PathGrid":
        """Standard grid: ``n2`` lambda2 values and ``n1`` lambda1 values, each
        exponential over ``[max / 10000, max]``."""
        for name, val in (("lambda1_max", lambda1_max), ("lambda2_max", lambda2_max)):
            if not (np.isfinite(val) and val > 0):
                raise DataError(f"{name} must be positive and finite to build a grid (got {val})")
        return cls(
            lambda1_values=np.geomspace(lambda1_max * LAMBDA_RANGE_DECADES, lambda1_max, n1),
            lambda2_values=np.geomspace(lambda2_max * LAMBDA_RANGE_DECADES, lambda2_max, n2),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.lambda2_values.size, self.lambda1_values.size


@dataclass(frozen=True)
class PathCell:
    """Solution record for one ``(lambda2, lambda1)`` grid cell."""

    beta: np.ndarray | None
    objective: float | None
    certificate_residual: float | None
    seconds: float
    nonzeros: int
    converged: bool
    skipped: bool = False
    error: str | None = None


@dataclass(frozen=True)
class PathResult:
    """All cells of a path run, keyed by ``(lambda2_index, lambda1_index)``."""

    grid: PathGrid
    cells: dict[tuple[int, int], PathCell]
    solver: str

    def cell(self, i2: int, i1: int) -> PathCell:
        return self.cells[(i2, i1)]

    def total_seconds(self) -> float:
        return sum(c.seconds for c in self.cells.values())

    def n_solved(self) -> int:
        return sum(1 for c in self.cells.values() if c.beta is not None)


def _working_squared_problem(problem: FusedProblem) -> FusedProblem:
    """Squared-error stand-in at ``beta = 0`` for GLM losses (quadratic at the null model)."""
    if problem.loss == SQUARED:
        return problem
    zero = np.zeros(problem.p)
    if problem.loss == LOGISTIC:
        z, v = logistic_working_response(problem.X, problem.y, zero)
        design = problem.X
    else:
        _, qdiag, z, v = cox_quadratic(problem.X, CoxData.from_response(problem.y), zero)
        base = (v[:, None] * problem.X * problem.X).sum(axis=0)
        scale = np.sqrt(np.where(base > 0, qdiag / np.where(base > 0, base, 1.0), 1.0))
        design = problem.X * np.where(np.isfinite(scale) & (scale > 0), scale, 1.0)
    return FusedProblem(
        X=design,
        y=z,
        graph=problem.graph,
        lambda1=problem.lambda1,
        lambda2=problem.lambda2,
        loss=SQUARED,
        obs_weights=v,
    )


def lambda1_max(problem: FusedProblem) -> float:
    """Smallest ``lambda1`` for which the solution at ``lambda2 = 0`` is all zero.

    For the squared loss this is ``max_k |x_k' y| / w_k`` (the stationarity
    bound at zero); GLM losses are evaluated through their quadratic
    approximation at the null model.
    """
    work = _working_squared_problem(problem)
    scores = np.abs(work.weighted_X.T @ work.weighted_y) / work.graph.node_weights
    return float(scores.max())


def _fully_fused_pulls(problem: FusedProblem) -> tuple[np.ndarray, np.ndarray]:
    """Fully fused one-parameter fit on one connected component; returns (beta, pulls).

    The pulls (smooth gradient at the fused solution) do not depend on
    ``lambda2``, so split stability is monotone in ``lambda2`` and can be
    bisected.
    """
    X = problem.weighted_X
    col = X.sum(axis=1)
    denom = float(col @ col)
    t = float(col @ problem.weighted_y) / denom if denom > 0 else 0.0
    beta = np.full(problem.p, t)
    pulls = -(X.T @ (problem.weighted_y - col * t))
    return beta, pulls


def _fused_set_stable(problem: FusedProblem, beta: np.ndarray, lam2: float) -> bool:
    probe = problem.with_lambdas(0.0, lam2)
    partition = build_partition(probe.graph, beta)
    mode = "active" if partition.values[0] != 0.0 else "inactive"
    parts = split_set(probe, beta, partition, 0, mode)
    return len(parts) == 1 and parts[0][1] == "whole"


def lambda2_max(problem: FusedProblem, rel_tol: float = 0.01) -> float:
    """Smallest ``lambda2`` keeping the fully fused solution stable at ``lambda1 = 0``.

    Computed by geometric bisection on the split check of the single fused
    set; the returned value is stable and within ``rel_tol`` of the boundary.
    On a disconnected penalty graph the value is computed per component and
    maximized, with a warning, since no single fused set exists.
    """
    work = _working_squared_problem(problem)
    components = work.graph.connected_components()
    if len(components) > 1:
        warnings.warn(
            "penalty graph is disconnected; lambda2_max is the max over components",
            stacklevel=2,
        )
        out = 0.0
        for comp in components:
            sub, node_map, _ = work.graph.subgraph(comp)
            sub_problem = FusedProblem(
                X=np.ascontiguousarray(work.weighted_X[:, node_map]),
                y=work.weighted_y,
                graph=sub,
                lambda1=0.0,
                lambda2=0.0,
                loss=SQUARED,
            )
            if comp.size > 1:
                out = max(out, lambda2_max(sub_problem, rel_tol))
        return out
    if work.p == 1:
        return 0.0
    work = work.with_lambdas(0.0, 0.0)
    beta, pulls = _fully_fused_pulls(work)
    if float(np.abs(pulls).max()) <= 1e-12:
        return 0.0
    hi = 1.0
    for _ in range(200):
        if _fused_set_stable(work, beta, hi):
            break
        hi *= 2.0
    else:
        raise DataError("lambda2_max bisection failed to bracket an upper bound")
    lo = hi / 2.0
    while lo > 1e-300 and _fused_set_stable(work, beta, lo):
        hi = lo
        lo /= 2.0
    if lo <= 1e-300:
        return 0.0
    while hi / lo > 1.0 + rel_tol:
        mid = float(np.sqrt(lo * hi))
        if _fused_set_stable(work, beta, mid):
            hi = mid
        else:
            lo = mid
    return hi


def _solve_cell(problem, solver, beta_start, cd_config, huber_config, certificates):
    start = time.perf_counter()
    error = None
    try:
        if solver == "exact":
            sol = solve_exact(problem, beta_start, cd_config, want_certificate=certificates)
            residual = sol.certificate.max_residual if sol.certificate is not None else None
        elif solver == "naive":
            sol = naive_cd(problem, beta_start, cd_config)
            residual = certificate_from_flows(problem, sol.beta).max_residual if certificates else None
        elif solver == "huber":
            sol = solve_huber(problem, beta_start, huber_config, cd_config, want_certificate=certificates)
            residual = sol.certificate.max_residual if sol.certificate is not None else None
        else:
            raise DataError(f"unknown solver {solver!r}")
    except DataError:
        raise
    except Exception as exc:  # a cell failure is recorded, the path continues
        return None, PathCell(
            beta=None,
            objective=None,
            certificate_residual=None,
            seconds=time.perf_counter() - start,
            nonzeros=0,
            converged=False,
            error=f"{type(exc).__name__}: {exc}",
        )
    seconds = time.perf_counter() - start
    return sol, PathCell(
        beta=sol.beta,
        objective=sol.objective,
        certificate_residual=residual,
        seconds=seconds,
        nonzeros=sol.nonzeros,
        converged=sol.converged,
        error=error,
    )


def run_path(
    problem: FusedProblem,
    solver: str = "exact",
    grid: PathGrid | None = None,
    *,
    cd_config: CdConfig | None = None,
    huber_config: HuberConfig | None = None,
    certificates: bool = False,
    threads: int = 1,
) -> PathResult:
    """Solve every grid cell, warm-starting along descending ``lambda1``.

    Rows (one per ``lambda2``) are independent: each starts cold from zero at
    the largest ``lambda1`` and reuses the previous cell's solution as it
    descends. Once a cell's solution has more than ``2n`` nonzero
    coefficients, the rest of its row is skipped and marked. ``threads > 1``
    runs rows concurrently; results are merged deterministically by grid
    index.

    When no ``cd_config`` is given the inner sweeps run tighter than the
    solver default (``tol=1e-9``): dense grid cells with more actives than
    observations are nearly flat, and a looser stop leaves visibly different
    coefficient vectors for different warm starts.
    """
    if problem.loss != SQUARED:
        raise DataError("run_path drives the squared loss; wrap GLM losses upstream")
    if cd_config is None:
        cd_config = CdConfig(tol=1e-9, max_sweeps=500_000)
    if grid is None:
        grid = PathGrid.build(lambda1_max(problem), lambda2_max(problem))
    stop_nonzeros = 2 * problem.n
    lam1_desc = grid.lambda1_values[::-1]

    def run_row(i2: int) -> dict[tuple[int, int], PathCell]:
        lam2 = float(grid.lambda2_values[i2])
        row: dict[tuple[int, int], PathCell] = {}
        beta_start = np.zeros(problem.p)
        stopped = False
        for j, lam1 in enumerate(lam1_desc):
            i1 = grid.lambda1_values.size - 1 - j
            if stopped:
                row[(i2, i1)] = PathCell(
                    beta=None,
                    objective=None,
                    certificate_residual=None,
                    seconds=0.0,
                    nonzeros=0,
                    converged=False,
                    skipped=True,
                )
                continue
            cell_problem = problem.with_lambdas(float(lam1), lam2)
            sol, cell = _solve_cell(cell_problem, solver, beta_start, cd_config, huber_config, certificates)
            row[(i2, i1)] = cell
            if sol is not None:
                beta_start = np.array(sol.beta, copy=True)
                if cell.nonzeros > stop_nonzeros:
                    stopped = True
        return row

    cells: dict[tuple[int, int], PathCell] = {}
    n2 = grid.lambda2_values.size
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for row in pool.map(run_row, range(n2)):
                cells.update(row)
    else:
        for i2 in range(n2):
            cells.update(run_row(i2))
    return PathResult(grid=grid, cells=cells, solver=solver)
