import math
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize

from oracles import uot_objective_loop
from ucoot.exceptions import ConfigurationError, ConvergenceWarning, DegenerateProblemError
from ucoot.uot import UotProblem, nnpr_solve, scaling_solve, uot_objective


def random_problem(rng, m, n, rho1, rho2, eps, prob=True):
    mu, nu = rng.uniform(0.2, 1.0, m), rng.uniform(0.2, 1.0, n)
    if prob:
        mu, nu = mu / mu.sum(), nu / nu.sum()
    return UotProblem(rng.uniform(0, 1, (m, n)), mu, nu, rho1, rho2, eps)


def stationarity_residual(prob, P):
    # gradient of the UOT objective in P, zero at the (interior) optimum
    g = prob.cost + prob.eps * np.log(P / np.outer(prob.mu, prob.nu))
    g += prob.rho1 * np.log(P.sum(1) / prob.mu)[:, None]
    g += prob.rho2 * np.log(P.sum(0) / prob.nu)[None, :]
    return np.max(np.abs(g))


class TestProblem:
    def test_rejects_zero_weight(self):
        with pytest.raises(DegenerateProblemError):
            UotProblem(np.zeros((2, 2)), [0.5, 0.0], [0.5, 0.5], 1, 1, 1)

    def test_rejects_inf_rho_without_eps(self):
        with pytest.raises(ConfigurationError):
            UotProblem(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], math.inf, math.inf, 0)

    def test_rejects_negative(self):
        with pytest.raises(ConfigurationError):
            UotProblem(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], -1, 1, 1)


class TestScaling:
    def test_zero_cost_balanced(self, rng):
        mu, nu = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
        P = scaling_solve(UotProblem(np.zeros((3, 4)), mu, nu, math.inf, math.inf, 0.5))
        np.testing.assert_allclose(P, np.outer(mu, nu), atol=1e-10)

    def test_zero_penalty_closed_form(self, rng):
        prob = random_problem(rng, 3, 4, 0.0, 0.0, 0.3)
        P = scaling_solve(prob)
        expected = np.outer(prob.mu, prob.nu) * np.exp(-prob.cost / prob.eps)
        np.testing.assert_allclose(P, expected, rtol=0, atol=1e-10)

    def test_balanced_marginals(self, rng):
        prob = random_problem(rng, 3, 4, math.inf, math.inf, 0.1)
        P = scaling_solve(prob, tol=1e-12, max_iter=10000)
        assert np.abs(P.sum(1) - prob.mu).sum() <= 1e-6
        assert np.abs(P.sum(0) - prob.nu).sum() <= 1e-6

    @pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
    def test_stationarity(self, rng, rho):
        prob = random_problem(rng, 4, 5, rho, 2 * rho, 0.05)
        P = scaling_solve(prob, tol=1e-12, max_iter=20000)
        assert stationarity_residual(prob, P) <= 1e-8

    def test_translation_same_fixed_point(self, rng):
        prob = random_problem(rng, 4, 3, 2.0, 0.5, 0.1)
        P1 = scaling_solve(prob, tol=1e-13, max_iter=100000, translation=True)
        P2 = scaling_solve(prob, tol=1e-13, max_iter=100000, translation=False)
        np.testing.assert_allclose(P1, P2, atol=1e-10)

    def test_large_rho_small_eps_converges(self, rng):
        prob = random_problem(rng, 8, 8, 1e3, 1e3, 1e-3)
        _, info = scaling_solve(prob, max_iter=5000, log=True)
        assert info["converged"]
        # plain generalized Sinkhorn contracts at rate rho / (rho + eps) here
        _, plain = scaling_solve(prob, max_iter=5000, translation=False, log=True)
        assert not plain["converged"]

    def test_balanced_shift_invariance(self, rng):
        prob = random_problem(rng, 3, 5, math.inf, math.inf, 0.2)
        shifted = UotProblem(prob.cost + 3.7, prob.mu, prob.nu, math.inf, math.inf, 0.2)
        P1 = scaling_solve(prob, tol=1e-12, max_iter=10000)
        P2 = scaling_solve(shifted, tol=1e-12, max_iter=10000)
        np.testing.assert_allclose(P1, P2, atol=1e-8)

    def test_log_info(self, rng):
        P, info = scaling_solve(random_problem(rng, 2, 2, 1, 1, 0.5), log=True)
        assert set(info) >= {"f", "g", "n_iter", "err", "converged"}
        assert info["f"].shape == (2,)

    def test_nonconvergence_warns(self, rng):
        prob = random_problem(rng, 4, 4, math.inf, math.inf, 1e-3)
        with pytest.warns(ConvergenceWarning):
            P = scaling_solve(prob, max_iter=2)
        assert np.all(np.isfinite(P))

    def test_requires_eps(self, rng):
        with pytest.raises(ConfigurationError):
            scaling_solve(random_problem(rng, 2, 2, 1, 1, 0.0))

    def test_init_potentials(self, rng):
        prob = random_problem(rng, 3, 3, 1, 1, 0.1)
        _, info = scaling_solve(prob, tol=1e-12, max_iter=5000, log=True)
        _, again = scaling_solve(prob, tol=1e-12, init=(info["f"], info["g"]), log=True)
        assert again["n_iter"] <= 2

    def test_extreme_cost_stays_finite(self, rng):
        prob = UotProblem(rng.uniform(0, 1e4, (5, 6)), np.full(5, 0.2), np.full(6, 1 / 6), 1, 1, 1e-3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            P = scaling_solve(prob)
        assert np.all(np.isfinite(P)) and np.all(P >= 0)


class TestNNPR:
    def test_product_fixed_point(self, rng):
        mu, nu = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
        prob = UotProblem(np.zeros((3, 4)), mu, nu, 0.7, 0.7, 0.0)
        P, info = nnpr_solve(prob, init=np.outer(mu, nu), log=True)
        np.testing.assert_allclose(P, np.outer(mu, nu), rtol=1e-12)
        assert info["n_iter"] == 1

    def test_zero_init(self, rng):
        with pytest.raises(DegenerateProblemError):
            nnpr_solve(random_problem(rng, 2, 2, 1, 1, 0), init=np.zeros((2, 2)))

    def test_zero_entries_stay_zero(self, rng):
        prob = random_problem(rng, 3, 3, 1, 1, 0.1)
        init = np.full((3, 3), 0.1)
        init[0, 1] = 0.0
        P = nnpr_solve(prob, init=init, max_iter=50)
        assert P[0, 1] == 0.0
        assert np.all(np.isfinite(P))

    def test_rejects_infinite(self, rng):
        with pytest.raises(ConfigurationError):
            nnpr_solve(random_problem(rng, 2, 2, math.inf, math.inf, 0.1))

    def test_agrees_with_scaling(self, rng):
        prob = random_problem(rng, 4, 5, 1.0, 1.0, 0.01)
        P1 = scaling_solve(prob, tol=1e-11, max_iter=100000)
        P2 = nnpr_solve(prob, tol=1e-11, max_iter=100000)
        assert np.max(np.abs(P1 - P2)) <= 1e-4

    def test_kkt_eps_zero(self, rng):
        # without entropy the optimum can be sparse: the gradient vanishes on
        # the support and is nonnegative elsewhere
        prob = random_problem(rng, 3, 4, 1.0, 0.5, 0.0)
        P = nnpr_solve(prob, tol=1e-14, max_iter=200000)
        g = prob.cost + prob.rho1 * np.log(P.sum(1) / prob.mu)[:, None] + prob.rho2 * np.log(P.sum(0) / prob.nu)
        support = P > 1e-6 * P.max()
        assert np.max(np.abs(g[support])) <= 1e-6
        assert np.min(g) >= -1e-6

    def test_descent_from_init(self, rng):
        prob = random_problem(rng, 4, 4, 2.0, 1.0, 0.1)
        init = rng.uniform(0.01, 0.2, (4, 4))
        P = nnpr_solve(prob, tol=1e-9, max_iter=10000, init=init)
        assert uot_objective(prob, P) <= uot_objective(prob, init)


class TestObjective:
    def test_matches_loop(self, rng):
        prob = random_problem(rng, 3, 4, 0.7, 1.3, 0.2, prob=False)
        P = rng.uniform(0, 1, (3, 4))
        ref = uot_objective_loop(prob.cost, prob.mu, prob.nu, 0.7, 1.3, 0.2, P)
        assert uot_objective(prob, P) == pytest.approx(ref, rel=1e-12)

    def test_indicator(self, rng):
        prob = random_problem(rng, 2, 2, math.inf, math.inf, 0.5)
        assert uot_objective(prob, np.outer(prob.mu, prob.nu)) == pytest.approx(
            float(np.sum(prob.cost * np.outer(prob.mu, prob.nu)))
        )
        assert uot_objective(prob, np.full((2, 2), 3.0)) == math.inf

    @pytest.mark.parametrize("rho,eps", [(1.0, 0.2), (0.3, 0.05), (5.0, 0.5)])
    def test_solvers_reach_brute_force_minimum(self, rng, rho, eps):
        prob = random_problem(rng, 2, 3, rho, rho, eps)

        def f(z):
            return uot_objective_loop(prob.cost, prob.mu, prob.nu, rho, rho, eps, np.exp(z).reshape(2, 3))

        def grad(z):
            P = np.exp(z).reshape(2, 3)
            g = prob.cost + eps * np.log(P / np.outer(prob.mu, prob.nu))
            g += rho * np.log(P.sum(1) / prob.mu)[:, None] + rho * np.log(P.sum(0) / prob.nu)
            return (P * g).ravel()

        z0 = np.log(np.outer(prob.mu, prob.nu)).ravel()
        best = minimize(f, z0, jac=grad, method="BFGS", options={"gtol": 1e-12})
        P1 = scaling_solve(prob, tol=1e-12, max_iter=20000)
        P2 = nnpr_solve(prob, tol=1e-12, max_iter=20000)
        assert uot_objective(prob, P1) == pytest.approx(best.fun, abs=1e-8)
        assert uot_objective(prob, P2) == pytest.approx(best.fun, abs=1e-8)
