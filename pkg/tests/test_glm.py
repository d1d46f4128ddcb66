import numpy as np
import pytest

from fusedlasso import (
    CoxData,
    DataError,
    FusedProblem,
    IrwlsConfig,
    PenaltyGraph,
    cox_quadratic,
    fit_glm,
    logistic_working_response,
    loss_value,
    solve_exact,
)
from fusedlasso.model import fit_value
from fusedlasso.verify import glm_kkt_certificate, numeric_fit_gradient


def newton_logistic(X, y, iters=80):
    beta = np.zeros(X.shape[1])
    for _ in range(iters):
        prob = 1.0 / (1.0 + np.exp(-(X @ beta)))
        w = prob * (1.0 - prob)
        step = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (y - prob))
        beta = beta + step
        if np.max(np.abs(step)) < 1e-13:
            break
    return beta


def make_logistic(rng, n=20, p=3, lambda1=0.0, lambda2=0.0):
    X = rng.standard_normal((n, p))
    true = rng.standard_normal(p)
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-(X @ true)))).astype(float)
    return FusedProblem(X=X, y=y, graph=PenaltyGraph.chain(p), lambda1=lambda1, lambda2=lambda2, loss="logistic")


def make_cox(rng, n=8, p=3, lambda1=0.0, lambda2=0.0, censor=0.3):
    X = rng.standard_normal((n, p))
    times = rng.uniform(1.0, 10.0, n)
    status = (rng.uniform(size=n) >= censor).astype(float)
    status[int(np.argmin(times))] = 1.0  # keep at least one event
    y = np.column_stack([times, status])
    return FusedProblem(X=X, y=y, graph=PenaltyGraph.chain(p), lambda1=lambda1, lambda2=lambda2, loss="cox")


class TestLogisticWorkingResponse:
    def test_values_at_zero(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 2))
        y = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
        z, v = logistic_working_response(X, y, np.zeros(2))
        assert np.allclose(v, 0.25)
        assert np.allclose(z, 4.0 * (y - 0.5))

    def test_extreme_predictor_is_clamped(self):
        X = np.array([[50.0]])
        y = np.array([1.0])
        clamp = 1e-5
        z, v = logistic_working_response(X, y, np.array([10.0]), prob_clamp=clamp)
        assert np.isfinite(z).all()
        assert v[0] == pytest.approx(clamp * (1 - clamp), rel=1e-9)
        assert 0.0 < v[0] <= 0.25

    def test_one_step_equals_newton_scoring(self):
        rng = np.random.default_rng(1)
        pr = make_logistic(rng)
        z, v = logistic_working_response(pr.X, pr.y, np.zeros(pr.p))
        sub = FusedProblem(X=pr.X, y=z, graph=pr.graph, lambda1=0.0, lambda2=0.0, obs_weights=v)
        one = solve_exact(sub)
        prob0 = np.full(pr.n, 0.5)
        w0 = prob0 * (1 - prob0)
        newton1 = np.linalg.solve(pr.X.T @ (w0[:, None] * pr.X), pr.X.T @ (pr.y - prob0))
        assert np.allclose(one.beta, newton1, atol=1e-8)


class TestCoxQuadratic:
    def test_hand_gradient_two_subjects(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((2, 3))
        cox = CoxData(times=np.array([1.0, 2.0]), status=np.array([1.0, 1.0]))
        d, _, _, _ = cox_quadratic(X, cox, np.zeros(3))
        assert np.allclose(d, (X[0] - X[1]) / 2.0, atol=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        pr = make_cox(rng, n=8, p=3)
        cox = CoxData.from_response(pr.y)
        for _ in range(10):
            beta = rng.standard_normal(3) * 0.6
            d, _, _, _ = cox_quadratic(pr.X, cox, beta)
            fd = -numeric_fit_gradient(pr, beta)  # fit is the negative log-likelihood
            assert np.allclose(d, fd, atol=1e-6)

    def test_curvature_diagonal_matches_full_matrix(self):
        rng = np.random.default_rng(4)
        pr = make_cox(rng, n=9, p=4)
        cox = CoxData.from_response(pr.y)
        beta = rng.standard_normal(4) * 0.4
        d, qdiag, z, v = cox_quadratic(pr.X, cox, beta)
        eta = pr.X @ beta
        n = pr.n
        W = np.zeros((n, n))
        for i in range(n):
            if cox.status[i] != 1.0:
                continue
            risk = np.flatnonzero(cox.times >= cox.times[i])
            S = np.exp(eta[risk]).sum()
            for k in risk:
                for kp in risk:
                    W[k, kp] -= np.exp(eta[k]) * np.exp(eta[kp]) / S**2
                W[k, k] += np.exp(eta[k]) / S
        Q = pr.X.T @ W @ pr.X
        assert np.allclose(qdiag, np.diag(Q), atol=1e-10)
        assert np.allclose(v, np.diag(W), atol=1e-12)
        # the rescaled working design reproduces the diagonal exactly
        base = (v[:, None] * pr.X * pr.X).sum(axis=0)
        D = np.sqrt(qdiag / base)
        assert np.allclose((v[:, None] * (pr.X * D) ** 2).sum(axis=0), qdiag, atol=1e-10)

    def test_working_response_reproduces_gradient(self):
        rng = np.random.default_rng(5)
        pr = make_cox(rng, n=10, p=3)
        cox = CoxData.from_response(pr.y)
        beta = rng.standard_normal(3) * 0.3
        d, qdiag, z, v = cox_quadratic(pr.X, cox, beta)
        base = (v[:, None] * pr.X * pr.X).sum(axis=0)
        D = np.sqrt(qdiag / base)
        Xd = pr.X * D
        grad_inner = Xd.T @ (v * (Xd @ beta - z))
        assert np.allclose(grad_inner, -d, atol=1e-8)

    def test_all_censored_is_an_error(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((4, 2))
        cox = CoxData(times=np.array([1.0, 2.0, 3.0, 4.0]), status=np.zeros(4))
        with pytest.raises(DataError):
            cox_quadratic(X, cox, np.zeros(2))

    def test_risk_sets(self):
        cox = CoxData(times=np.array([3.0, 1.0, 2.0]), status=np.array([1.0, 1.0, 0.0]))
        assert sorted(cox.risk_set(1).tolist()) == [0, 1, 2]  # earliest time: everyone at risk
        assert sorted(cox.risk_set(0).tolist()) == [0]
        assert cox.n_events() == 2

    def test_tied_times_rejected(self):
        with pytest.raises(DataError):
            CoxData(times=np.array([1.0, 1.0]), status=np.array([1.0, 0.0]))


class TestFitGlm:
    def test_unpenalized_logistic_matches_newton(self):
        rng = np.random.default_rng(7)
        pr = make_logistic(rng, n=20, p=3)
        sol = fit_glm(pr, solver="exact")
        ref = newton_logistic(pr.X, pr.y)
        assert np.allclose(sol.beta, ref, atol=1e-6)
        assert sol.converged

    def test_null_logistic_objective(self):
        rng = np.random.default_rng(8)
        pr = make_logistic(rng, n=20, p=3, lambda1=100.0, lambda2=0.0)
        sol = fit_glm(pr)
        assert np.all(sol.beta == 0.0)
        assert sol.objective == pytest.approx(20 * np.log(2.0), rel=1e-12)

    def test_penalized_logistic_kkt(self):
        rng = np.random.default_rng(9)
        pr = make_logistic(rng, n=20, p=3, lambda1=0.1, lambda2=0.1)
        sol = fit_glm(pr, solver="exact", config=IrwlsConfig(tol=1e-11))
        cert = glm_kkt_certificate(pr, sol.beta)
        assert cert.max_residual <= 1e-4

    def test_penalized_cox_kkt(self):
        rng = np.random.default_rng(10)
        pr = make_cox(rng, n=15, p=4, lambda1=0.1, lambda2=0.1)
        sol = fit_glm(pr, solver="exact", config=IrwlsConfig(tol=1e-11))
        cert = glm_kkt_certificate(pr, sol.beta)
        assert cert.max_residual <= 1e-4

    def test_objective_never_increases(self):
        rng = np.random.default_rng(11)
        for maker in (make_logistic, make_cox):
            pr = maker(rng, lambda1=0.05, lambda2=0.05)
            sol = fit_glm(pr)
            assert sol.objective <= fit_value(pr, np.zeros(pr.p)) + 1e-12
            assert not sol.diagnostics["rejected_step"]

    def test_exact_objective_reported(self):
        rng = np.random.default_rng(12)
        pr = make_logistic(rng, lambda1=0.2, lambda2=0.1)
        sol = fit_glm(pr)
        assert sol.objective == pytest.approx(loss_value(pr, sol.beta), rel=1e-12)

    def test_all_solvers_agree_on_small_instance(self):
        rng = np.random.default_rng(13)
        pr = make_logistic(rng, n=25, p=4, lambda1=0.1, lambda2=0.2)
        objs = [fit_glm(pr, solver=s).objective for s in ("exact", "naive", "huber")]
        assert max(objs) - min(objs) <= 1e-5

    def test_rejects_squared_loss(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((5, 2))
        pr = FusedProblem(X=X, y=np.zeros(5), graph=PenaltyGraph.chain(2), lambda1=0.0, lambda2=0.0)
        with pytest.raises(DataError):
            fit_glm(pr)

    def test_unknown_solver_rejected(self):
        rng = np.random.default_rng(15)
        pr = make_logistic(rng)
        with pytest.raises(DataError):
            fit_glm(pr, solver="downhill")
