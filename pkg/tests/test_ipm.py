"""Interior-point solver tests on problems with known optima."""

import numpy as np
import pytest
from scipy.optimize import minimize

from gridshed.ipm import NlpProblem, solve_nlp


def quadratic(center):
    center = np.asarray(center, dtype=float)

    def objective(x):
        d = x - center
        return float(d @ d), 2.0 * d

    def hessian(x, lam, mu):
        return 2.0 * np.eye(len(center))

    return objective, hessian


class TestUnconstrainedAndBoxes:
    def test_free_minimum(self):
        obj, hess = quadratic([2.0, -1.0])
        problem = NlpProblem(
            objective=obj,
            lower=np.full(2, -np.inf),
            upper=np.full(2, np.inf),
            hessian=hess,
        )
        res = solve_nlp(problem, np.zeros(2))
        assert res.converged
        np.testing.assert_allclose(res.x, [2.0, -1.0], atol=1e-6)
        assert res.f == pytest.approx(0.0, abs=1e-8)

    def test_active_box_bounds(self):
        obj, hess = quadratic([2.0, -1.0])
        problem = NlpProblem(
            objective=obj,
            lower=np.zeros(2),
            upper=np.ones(2),
            hessian=hess,
        )
        res = solve_nlp(problem, np.full(2, 0.5))
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-6)
        assert res.f == pytest.approx(2.0, abs=1e-6)

    def test_one_sided_bounds(self):
        obj, hess = quadratic([-3.0, 5.0])
        problem = NlpProblem(
            objective=obj,
            lower=np.array([0.0, -np.inf]),
            upper=np.array([np.inf, 4.0]),
            hessian=hess,
        )
        res = solve_nlp(problem, np.array([1.0, 0.0]))
        assert res.converged
        np.testing.assert_allclose(res.x, [0.0, 4.0], atol=1e-6)

    def test_pinned_variable_is_exact(self):
        obj, hess = quadratic([2.0, -1.0, 0.0])
        problem = NlpProblem(
            objective=obj,
            lower=np.array([-10.0, 3.0, -10.0]),
            upper=np.array([10.0, 3.0, 10.0]),
            hessian=hess,
        )
        res = solve_nlp(problem, np.zeros(3))
        assert res.converged
        assert res.x[1] == 3.0
        np.testing.assert_allclose(res.x, [2.0, 3.0, 0.0], atol=1e-6)


class TestEqualities:
    def test_projection_onto_hyperplane(self):
        def objective(x):
            return float(x @ x), 2.0 * x

        def equalities(x):
            return np.array([x[0] + x[1] - 1.0]), np.array([[1.0, 1.0]])

        problem = NlpProblem(
            objective=objective,
            lower=np.full(2, -np.inf),
            upper=np.full(2, np.inf),
            equalities=equalities,
            hessian=lambda x, lam, mu: 2.0 * np.eye(2),
        )
        res = solve_nlp(problem, np.array([5.0, -5.0]))
        assert res.converged
        np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-7)
        # Stationarity 2 x + lam * [1, 1] = 0 fixes the multiplier.
        assert res.lam[0] == pytest.approx(-1.0, abs=1e-6)

    def test_contradictory_equalities_do_not_crash(self):
        def objective(x):
            return float(x @ x), 2.0 * x

        def equalities(x):
            return (
                np.array([x[0], x[0] - 1.0]),
                np.array([[1.0, 0.0], [1.0, 0.0]]),
            )

        problem = NlpProblem(
            objective=objective,
            lower=np.full(2, -np.inf),
            upper=np.full(2, np.inf),
            equalities=equalities,
            hessian=lambda x, lam, mu: 2.0 * np.eye(2),
        )
        res = solve_nlp(problem, np.zeros(2), max_iter=30)
        assert not res.converged
        assert res.status in ("max_iter", "numerical_failure")


class TestInequalities:
    def test_linear_objective_on_disc(self):
        def objective(x):
            return float(x[0] + x[1]), np.ones(2)

        def inequalities(x):
            return np.array([x @ x - 1.0]), 2.0 * x[None, :]

        problem = NlpProblem(
            objective=objective,
            lower=np.full(2, -np.inf),
            upper=np.full(2, np.inf),
            inequalities=inequalities,
            hessian=lambda x, lam, mu: 2.0 * mu[0] * np.eye(2),
        )
        res = solve_nlp(problem, np.zeros(2))
        assert res.converged
        root_half = np.sqrt(0.5)
        np.testing.assert_allclose(res.x, [-root_half, -root_half], atol=1e-6)
        assert res.mu[0] == pytest.approx(root_half, abs=1e-6)

    def test_inactive_inequality_has_vanishing_dual(self):
        obj, hess = quadratic([0.2, 0.2])

        def inequalities(x):
            return np.array([x @ x - 1.0]), 2.0 * x[None, :]

        problem = NlpProblem(
            objective=obj,
            lower=np.full(2, -np.inf),
            upper=np.full(2, np.inf),
            inequalities=inequalities,
            hessian=lambda x, lam, mu: hess(x, lam, mu) + 2.0 * mu[0] * np.eye(2),
        )
        res = solve_nlp(problem, np.zeros(2))
        assert res.converged
        np.testing.assert_allclose(res.x, [0.2, 0.2], atol=1e-6)
        assert res.mu[0] <= 1e-6


class TestAgainstScipy:
    def test_random_constrained_quadratics(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            n = 4
            m = rng.standard_normal((n, n))
            q = m @ m.T + n * np.eye(n)
            c = rng.standard_normal(n)
            a = rng.standard_normal((1, n))
            b = rng.standard_normal(1)
            radius = 4.0 + rng.random()

            def objective(x, q=q, c=c):
                return float(0.5 * x @ q @ x + c @ x), q @ x + c

            def equalities(x, a=a, b=b):
                return a @ x - b, a

            def inequalities(x, radius=radius):
                return np.array([x @ x - radius]), 2.0 * x[None, :]

            def hessian(x, lam, mu, q=q):
                return q + 2.0 * mu[0] * np.eye(len(x))

            lower, upper = np.full(n, -2.0), np.full(n, 2.0)
            problem = NlpProblem(
                objective=objective,
                lower=lower,
                upper=upper,
                equalities=equalities,
                inequalities=inequalities,
                hessian=hessian,
            )
            res = solve_nlp(problem, np.zeros(n))
            assert res.converged

            ref = minimize(
                lambda x: 0.5 * x @ q @ x + c @ x,
                np.zeros(n),
                jac=lambda x: q @ x + c,
                method="SLSQP",
                bounds=[(-2.0, 2.0)] * n,
                constraints=[
                    {"type": "eq", "fun": lambda x, a=a, b=b: (a @ x - b)[0]},
                    {"type": "ineq",
                     "fun": lambda x, radius=radius: radius - x @ x},
                ],
                options={"ftol": 1e-12, "maxiter": 200},
            )
            assert ref.success
            assert res.f <= ref.fun + 1e-5
            np.testing.assert_allclose(res.x, ref.x, atol=1e-4)


class TestDiagnostics:
    def test_reports_kkt_residuals(self):
        obj, hess = quadratic([0.5, 0.5])
        problem = NlpProblem(
            objective=obj,
            lower=np.zeros(2),
            upper=np.ones(2),
            hessian=hess,
        )
        res = solve_nlp(problem, np.full(2, 0.25))
        assert res.converged
        assert set(res.kkt) == {"feasibility", "gradient", "complementarity"}
        assert all(v <= 1e-6 for v in res.kkt.values())

    def test_rejects_inverted_bounds(self):
        obj, hess = quadratic([0.0])
        problem = NlpProblem(
            objective=obj,
            lower=np.array([1.0]),
            upper=np.array([0.0]),
            hessian=hess,
        )
        with pytest.raises(ValueError):
            solve_nlp(problem, np.zeros(1))
