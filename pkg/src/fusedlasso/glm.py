"""Logistic and Cox losses reduced to weighted squared-error solves (IRWLS).

Each outer iteration builds a quadratic approximation of the negative
(partial) log-likelihood at the current estimate, expressed as a weighted
least-squares problem so the squared-error solvers apply unchanged (rows are
scaled by the square root of the working weights). The exact penalized
likelihood is re-evaluated after every inner solve; a step that fails to
decrease it is rejected and the fit is flagged instead of silently accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .coordinate import CdConfig, naive_cd
from .fusion import solve_exact
from .huber import HuberConfig, solve_huber
from .model import (
    COX,
    LOGISTIC,
    SQUARED,
    DataError,
    FusedProblem,
    Solution,
    loss_value,
)


@dataclass(frozen=True)
class IrwlsConfig:
    """Outer-loop controls for the reweighted least-squares iteration."""

    max_outer: int = 50
    tol: float = 1e-8
    prob_clamp: float = 1e-5

    def __post_init__(self):
        if self.max_outer < 1:
            raise DataError("max_outer must be at least 1")
        if not self.tol > 0:
            raise DataError("tol must be positive")
        if not (0.0 < self.prob_clamp < 0.5):
            raise DataError("prob_clamp must lie in (0, 0.5)")


@dataclass(frozen=True)
class CoxData:
    """Survival response with risk-set machinery.

    ``times`` must be positive and pairwise distinct (no ties); ``status`` is
    1 for an observed event, 0 for censoring. The risk set of time ``t_k`` is
    every observation still under observation at ``t_k``, i.e. ``{l : t_l >= t_k}``.
    """

    times: np.ndarray
    status: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        status = np.asarray(self.status, dtype=float)
        if times.ndim != 1 or times.shape != status.shape:
            raise DataError("times and status must be vectors of equal length")
        if np.any(times <= 0) or not np.all(np.isfinite(times)):
            raise DataError("event times must be finite and positive")
        if np.unique(times).size != times.size:
            raise DataError("tied event times are not supported")
        if not np.all(np.isin(status, (0.0, 1.0))):
            raise DataError("status must be 0 or 1")
        times.setflags(write=False)
        status.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "status", status)

    @classmethod
    def from_response(cls, y) -> "CoxData":
        y = np.asarray(y, dtype=float)
        if y.ndim != 2 or y.shape[1] != 2:
            raise DataError("cox response must be an (n, 2) array of (time, status)")
        return cls(times=y[:, 0].copy(), status=y[:, 1].copy())

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @cached_property
    def order(self) -> np.ndarray:
        """Indices sorted by ascending time; risk sets are suffixes in this order."""
        out = np.argsort(self.times, kind="stable")
        out.setflags(write=False)
        return out

    def risk_set(self, k: int) -> np.ndarray:
        """Observation indices still at risk at ``times[k]``."""
        return np.flatnonzero(self.times >= self.times[k])

    def n_events(self) -> int:
        return int(self.status.sum())


def logistic_working_response(X, y, beta, prob_clamp: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Working response and weights of one Newton-scoring step for logistic loss.

    With success probabilities ``p_k`` (clamped away from 0 and 1 before any
    division), ``v_k = p_k (1 - p_k)`` and
    ``z_k = x_k' beta + (y_k - p_k) / v_k``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    eta = X @ beta
    prob = 1.0 / (1.0 + np.exp(-eta))
    prob = np.clip(prob, prob_clamp, 1.0 - prob_clamp)
    v = prob * (1.0 - prob)
    z = eta + (y - prob) / v
    return z, v


def _cox_suffix_stats(X: np.ndarray, cox: CoxData, beta: np.ndarray):
    """Per-observation gradient and curvature pieces of the partial likelihood."""
    order = cox.order
    eta = X @ beta
    eta_s = eta[order]
    status_s = cox.status[order]
    shift = eta_s.max()
    w = np.exp(eta_s - shift)  # proportional hazards, common factor cancels in every ratio
    suffix_w = np.cumsum(w[::-1])[::-1]
    return order, eta_s, status_s, w, suffix_w


def cox_quadratic(X, cox_data: CoxData, beta) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradient and diagonal quadratic approximation of the Cox partial likelihood.

    Returns ``(d, qdiag, z, v)``: the gradient of the log partial likelihood,
    the diagonal of the true curvature of its negative (matched exactly by the
    column-rescaled working problem), and the working response/weights pair
    for the weighted least-squares subproblem. The full curvature matrix is
    never materialized; only its diagonal is used, with the design columns
    rescaled so the approximation agrees with the truth on the diagonal.
    """
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    n, p = X.shape
    if cox_data.n != n:
        raise DataError(f"design has {n} rows but the survival response has {cox_data.n}")
    if cox_data.n_events() == 0:
        raise DataError("all observations are censored; the partial likelihood is flat")
    order, eta_s, status_s, w, suffix_w = _cox_suffix_stats(X, cox_data, beta)
    X_s = X[order]
    # cumulative 1/S and 1/S^2 over events with time <= t_k (prefix in sorted order)
    inv_s = np.where(status_s > 0, 1.0 / suffix_w, 0.0)
    inv_s2 = np.where(status_s > 0, 1.0 / suffix_w**2, 0.0)
    cum_inv = np.cumsum(inv_s)
    cum_inv2 = np.cumsum(inv_s2)
    # gradient wrt the linear predictors, then chain through X
    u_s = status_s - w * cum_inv
    d = X_s.T @ u_s
    # diagonal working weights: curvature of -loglik wrt each linear predictor
    v_s = w * cum_inv - (w * w) * cum_inv2
    v_s = np.maximum(v_s, 0.0)
    # exact curvature diagonal wrt beta, via suffix sums of weighted columns
    suffix_wx = np.cumsum((w[:, None] * X_s)[::-1], axis=0)[::-1]
    suffix_wx2 = np.cumsum((w[:, None] * X_s * X_s)[::-1], axis=0)[::-1]
    events = status_s > 0
    ratio1 = suffix_wx[events] / suffix_w[events, None]
    ratio2 = suffix_wx2[events] / suffix_w[events, None]
    qdiag = np.maximum((ratio2 - ratio1 * ratio1).sum(axis=0), 0.0)
    # undo the sort for the per-observation quantities
    v = np.empty(n)
    v[order] = v_s
    u = np.empty(n)
    u[order] = u_s
    # column rescale so the diagonal working curvature matches qdiag exactly
    base_diag = (v[:, None] * X * X).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.sqrt(np.where(base_diag > 0, qdiag / np.where(base_diag > 0, base_diag, 1.0), 1.0))
    D = np.where(np.isfinite(D) & (D > 0), D, 1.0)
    Xd = X * D
    # working response: z = Xd beta + e with Xd' diag(v) e = d, supported on v > 0
    mask = v > 0
    e = np.zeros(n)
    if mask.any():
        r_m = np.linalg.lstsq(Xd[mask].T, d, rcond=None)[0]
        e[mask] = r_m / v[mask]
    z = Xd @ beta + e
    return d, qdiag, z, v


def _cox_rescale(X: np.ndarray, v: np.ndarray, qdiag: np.ndarray) -> np.ndarray:
    base_diag = (v[:, None] * X * X).sum(axis=0)
    D = np.sqrt(np.where(base_diag > 0, qdiag / np.where(base_diag > 0, base_diag, 1.0), 1.0))
    return np.where(np.isfinite(D) & (D > 0), D, 1.0)


_SOLVERS = ("exact", "naive", "huber")


def fit_glm(
    problem: FusedProblem,
    solver: str = "exact",
    config: IrwlsConfig | None = None,
    cd_config: CdConfig | None = None,
    huber_config: HuberConfig | None = None,
    beta0=None,
) -> Solution:
    """Penalized logistic or Cox fit via reweighted squared-error solves.

    Alternates a quadratic approximation of the negative log-likelihood at the
    current estimate with an inner fused-lasso solve of the chosen kind, until
    the exact penalized likelihood stops changing (relative tolerance) or the
    iteration cap is reached. A step that increases the exact penalized
    likelihood is rejected and the result flagged as not converged; no step
    halving is attempted.
    """
    cfg = config or IrwlsConfig()
    if problem.loss not in (LOGISTIC, COX):
        raise DataError("fit_glm handles logistic and cox losses; use the solvers directly for squared")
    if solver not in _SOLVERS:
        raise DataError(f"unknown solver {solver!r}, expected one of {_SOLVERS}")
    X = problem.X
    cox_data = CoxData.from_response(problem.y) if problem.loss == COX else None
    beta = np.zeros(problem.p) if beta0 is None else np.array(np.asarray(beta0, dtype=float), copy=True)
    objective = loss_value(problem, beta)
    converged = False
    rejected = False
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        if problem.loss == LOGISTIC:
            z, v = logistic_working_response(X, problem.y, beta, cfg.prob_clamp)
            design = X
        else:
            d, qdiag, z, v = cox_quadratic(X, cox_data, beta)
            design = X * _cox_rescale(X, v, qdiag)
        sub = FusedProblem(
            X=design,
            y=z,
            graph=problem.graph,
            lambda1=problem.lambda1,
            lambda2=problem.lambda2,
            loss=SQUARED,
            obs_weights=v,
        )
        if solver == "exact":
            inner = solve_exact(sub, beta, cd_config, want_certificate=False)
        elif solver == "naive":
            inner = naive_cd(sub, beta, cd_config)
        else:
            inner = solve_huber(sub, beta, huber_config, cd_config, want_certificate=False)
        new_objective = loss_value(problem, inner.beta)
        if new_objective > objective + 1e-12 * (1.0 + abs(objective)):
            rejected = True
            break
        improved = objective - new_objective
        beta = np.array(inner.beta, copy=True)
        objective = new_objective
        if improved <= cfg.tol * (1.0 + abs(objective)):
            converged = True
            break
    return Solution(
        beta=beta,
        objective=objective,
        iterations=outer,
        converged=converged and not rejected,
        diagnostics={"rejected_step": rejected},
    )
