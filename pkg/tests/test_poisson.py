import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwmcv import poisson, targets
from rwmcv.exceptions import DomainError, IllConditioned, NotPositiveDefinite

from oracles import h_erf

L = 2.38


def identity(x):
    return np.asarray(x, dtype=float)


@pytest.fixture(scope="module")
def normal_solution():
    dens = targets.standard_normal()
    c = poisson.LimitConstants.from_J(1.0, L)
    return dens, c, poisson.solve_closed_form(dens, identity, 0.0, c)


@pytest.fixture(scope="module")
def bimodal_solution():
    dens = targets.bimodal_mixture()
    c = poisson.LimitConstants.from_J(targets.fisher_J(dens), L)
    return dens, c, poisson.solve_closed_form(dens, identity, 1.2, c)


def interior_quantiles(dens, n=200):
    return np.array([dens.quantile(q) for q in np.linspace(0.005, 0.995, n)])


class TestHofL:
    def test_small_l(self):
        from oracles import norm_cdf
        assert abs(poisson.h_of_l(0.001, 1.0) - 2e-6 * norm_cdf(-0.0005)) < 1e-12
        assert poisson.h_of_l(1e-4, 1.0) / 1e-8 == pytest.approx(1.0, abs=1e-4)

    def test_erf_oracle(self):
        assert poisson.h_of_l(2.38, 1.0) == pytest.approx(h_erf(2.38, 1.0), abs=1e-12)

    @given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 10))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_J(self, l, J1, J2):
        if J1 == J2:
            return
        lo, hi = sorted((J1, J2))
        assert poisson.h_of_l(l, lo) > poisson.h_of_l(l, hi)

    def test_limit_constants(self):
        c = poisson.LimitConstants.from_J(0.7, 1.9)
        assert c.h_l == pytest.approx(2 * 1.9 ** 2 * 0.5 * math.erfc(1.9 * math.sqrt(0.7) / 2 / math.sqrt(2)),
                                     rel=1e-15)
        auto = poisson.LimitConstants.from_J(4.0)
        assert auto.l == pytest.approx(2.3812024793859132 / 2, rel=1e-7)

    def test_domain(self):
        with pytest.raises(ValueError):
            poisson.h_of_l(0.0, 1.0)


class TestClosedForm:
    def test_normal_linear(self, normal_solution):
        dens, c, sol = normal_solution
        x = np.linspace(-4, 4, 801)
        x = x[x != 0]
        ref = 2.0 / c.h_l * x
        assert np.max(np.abs(sol(x) - ref) / np.abs(ref)) < 1e-4
        assert sol(0.0) == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(sol.derivative(x), 2.0 / c.h_l, rtol=1e-4)

    def test_runtime(self):
        t0 = time.perf_counter()
        poisson.solve_closed_form(targets.standard_normal(), identity, 0.0,
                                  poisson.LimitConstants.from_J(1.0, L))
        assert time.perf_counter() - t0 < 5.0

    def test_constant_f_gives_zero(self, bimodal):
        c = poisson.LimitConstants.from_J(targets.fisher_J(bimodal), L)
        sol = poisson.solve_closed_form(bimodal, lambda x: np.full(np.shape(x), 3.0), 3.0, c)
        assert sol.is_zero
        assert np.all(sol(np.linspace(-20, 20, 11)) == 0.0)

    @pytest.mark.parametrize("which", ["normal", "bimodal"])
    def test_generator_residual(self, which, normal_solution, bimodal_solution):
        dens, c, sol = normal_solution if which == "normal" else bimodal_solution
        rf = sol.meta["rho_f"]
        x = interior_quantiles(dens)
        res = poisson.generator_limit(dens, sol, c, x) - (rf - x)
        assert np.max(np.abs(res) / (1 + np.abs(x))) <= 1e-3
        assert np.max(np.abs(res)) <= 1e-3

    def test_linear_extension_and_strict_domain(self, normal_solution):
        _, c, sol = normal_solution
        lo, hi = sol.meta["domain"]
        y = np.array([hi + 1.0, hi + 5.0])
        np.testing.assert_allclose(np.diff(sol(y)), 4.0 * 2.0 / c.h_l, rtol=1e-4)
        with pytest.raises(DomainError):
            sol.evaluate(hi + 1.0, strict=True)
        sol.evaluate(0.5 * (lo + hi), strict=True)

    def test_square_observable(self, normal):
        # f = x^2 on N(0,1): I(y) = int (1 - z^2) rho = y rho(y), so fhat' = 2y/h and fhat = y^2/h
        c = poisson.LimitConstants.from_J(1.0, L)
        sol = poisson.solve_closed_form(normal, lambda x: np.asarray(x) ** 2, 1.0, c)
        x = np.linspace(-3, 3, 61)
        np.testing.assert_allclose(sol(x), x ** 2 / c.h_l, atol=1e-6)


class TestGrid:
    def test_normal_matches_linear(self, normal):
        c = poisson.LimitConstants.from_J(1.0, L)
        sol = poisson.solve_grid(normal.log_rho, identity, 0.0, None, L, 1, c, domain=(-4, 4))
        nodes = sol.meta["grid_nodes"][1:-1]
        # the additive constant is free; remove the mean before comparing slopes
        vals = sol(nodes) - np.mean(sol(nodes))
        ref = 2.0 / c.h_l * nodes
        keep = np.abs(ref) > 1e-9
        assert np.max(np.abs(vals[keep] - ref[keep]) / np.abs(ref[keep])) < 0.02
        assert sol.meta["rank"] == 99

    def test_default_domain_from_chain(self, normal):
        c = poisson.LimitConstants.from_J(1.0, L)
        xs = np.array([-1.0, 0.5, 2.0])
        sol = poisson.solve_grid(normal.log_rho, identity, 0.0, xs, L, 4, c)
        lo, hi = sol.meta["domain"]
        assert lo == pytest.approx(-1.0 - 3 * L / 2) and hi == pytest.approx(2.0 + 3 * L / 2)
        assert sol.meta["grid_nodes"].size == 100

    def test_piecewise_linear(self, bimodal):
        c = poisson.LimitConstants.from_J(targets.fisher_J(bimodal), L)
        sol = poisson.solve_grid(bimodal.log_rho, identity, 1.2, None, L, 5, c, domain=(-8, 10))
        x = sol.meta["grid_nodes"]
        mid = 0.5 * (x[:-1] + x[1:])
        np.testing.assert_allclose(sol(mid), 0.5 * (sol(x[:-1]) + sol(x[1:])), rtol=1e-12, atol=1e-12)

    def test_constant_f(self, bimodal):
        c = poisson.LimitConstants.from_J(targets.fisher_J(bimodal), L)
        sol = poisson.solve_grid(bimodal.log_rho, lambda x: np.full(np.shape(x), 2.0), 2.0, None, L, 5, c,
                                 domain=(-8, 10))
        v = sol.meta["grid_values"]
        assert np.allclose(v, v[0], atol=1e-12)

    def test_rejects_tiny_grid(self, normal):
        c = poisson.LimitConstants.from_J(1.0, L)
        with pytest.raises(ValueError):
            poisson.solve_grid(normal.log_rho, identity, 0.0, [0.0], L, 1, c, m=5)

    def test_ill_conditioned_warning(self, normal):
        # a coarse cut-off discards the small singular values of the stencil
        c = poisson.LimitConstants.from_J(1.0, L)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            sol = poisson.solve_grid(normal.log_rho, identity, 0.0, None, L, 1, c, domain=(-4, 4),
                                     rcond=1e-2)
        assert any(issubclass(x.category, IllConditioned) for x in w)
        assert sol.meta["rank"] < 98 and np.all(np.isfinite(sol.meta["grid_values"]))

    @pytest.mark.parametrize("which,m", [("normal", 100), ("bimodal", 400)])
    def test_generator_residual_exact_inputs(self, which, m, normal_solution, bimodal_solution):
        dens, c, cf = normal_solution if which == "normal" else bimodal_solution
        rf = cf.meta["rho_f"]
        sol = poisson.solve_grid(dens.log_rho, identity, rf, None, L, 5, c, m=m,
                                 domain=poisson.evaluation_domain(dens))
        x = interior_quantiles(dens)
        res = poisson.generator_limit(dens, sol, c, x) - (rf - x)
        assert np.max(np.abs(res) / (1 + np.abs(x))) <= 5e-2

    def test_second_order_convergence(self, bimodal_solution):
        dens, c, _ = bimodal_solution
        x = interior_quantiles(dens)
        errs = []
        for m in (200, 400, 800):
            sol = poisson.solve_grid(dens.log_rho, identity, 1.2, None, L, 5, c, m=m,
                                     domain=poisson.evaluation_domain(dens))
            res = poisson.generator_limit(dens, sol, c, x) - (1.2 - x)
            errs.append(np.max(np.abs(res) / (1 + np.abs(x))))
        assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0

    def test_cross_agreement_with_closed_form(self, bimodal_solution, normal_solution):
        for dens, c, cf in (bimodal_solution, normal_solution):
            rf = cf.meta["rho_f"]
            sol = poisson.solve_grid(dens.log_rho, identity, rf, None, L, 5, c,
                                     domain=poisson.evaluation_domain(dens))
            nodes = sol.meta["grid_nodes"][2:-2]
            diff = sol(nodes) - cf(nodes)
            # solutions are defined up to an additive constant
            diff -= np.mean(diff)
            assert np.max(np.abs(diff)) <= 0.02 * np.max(np.abs(cf(nodes)))


class TestGaussianCV:
    def test_identity_covariance(self):
        d = 6
        sol = poisson.gaussian_cv(np.eye(d), L, d)
        assert sol.meta["J0"] == pytest.approx((d - 1) / d, rel=1e-14)
        h0 = poisson.h_of_l(L, (d - 1) / d)
        x = np.random.default_rng(0).normal(size=(5, d))
        np.testing.assert_allclose(sol(x), 2.0 / h0 * x[:, 0], rtol=1e-14)

    def test_d1(self):
        sol = poisson.gaussian_cv(np.array([[2.5]]), L, 1)
        assert sol.meta["J0"] == 0.0 and sol.meta["h_l"] == pytest.approx(L * L, rel=1e-15)
        assert sol(np.array([1.0])) == pytest.approx(2.0 / L ** 2 * 2.5)

    def test_spiked_J0_spectral_oracle(self):
        for d in (2, 5, 10, 50):
            S = targets.spiked_covariance(d)
            v = np.ones(d) / math.sqrt(d)
            inv = np.eye(d) + (1.0 / 25.0 - 1.0) * np.outer(v, v)
            J0 = np.trace(inv[1:, 1:]) / d
            assert poisson.gaussian_cv(S, L, d).meta["J0"] == pytest.approx(J0, abs=1e-10)

    def test_linear_in_state(self):
        S = targets.spiked_covariance(4)
        sol = poisson.gaussian_cv(S, L, 4)
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert sol(2 * a - 3 * b) == pytest.approx(2 * sol(a) - 3 * sol(b), rel=1e-12)

    def test_shift_invariance(self):
        # the CV is built from Sigma only: targets with different means give the same function
        d = 5
        x = np.random.default_rng(2).normal(size=(3, d))
        outs = [poisson.gaussian_cv(targets.bimodal_gaussian_mixture(d, h).cov, L, d)(x)
                for h in (0.0, 4.0, 10.0)]
        assert np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], outs[2])

    def test_matches_closed_form_with_J0(self):
        sigma, d = 1.7, 8
        sol = poisson.gaussian_cv(sigma ** 2 * np.eye(d), L, d)
        J0 = sol.meta["J0"]
        c0 = poisson.LimitConstants(J0, L, poisson.h_of_l(L, J0))
        cf = poisson.solve_closed_form(targets.normal(sigma), identity, 0.0, c0)
        x1 = np.linspace(-4 * sigma, 4 * sigma, 41)
        state = np.zeros((x1.size, d))
        state[:, 0] = x1
        np.testing.assert_allclose(sol(state), cf(x1), rtol=1e-6, atol=1e-9)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            poisson.gaussian_cv(np.array([[1.0, 2.0], [2.0, 1.0]]), L)
        with pytest.raises(NotPositiveDefinite):
            poisson.gaussian_cv(np.array([[1.0, 0.5], [0.0, 1.0]]), L)


class TestGeneratorLimit:
    def test_constant(self, bimodal):
        c = poisson.LimitConstants.from_J(1.0, L)
        x = np.linspace(-5, 5, 11)
        out = poisson.generator_limit(bimodal, lambda y: np.full(np.shape(y), 7.0), c, x)
        np.testing.assert_allclose(out, 0.0, atol=1e-9)

    def test_square_hand_value(self, normal):
        # h = 2 makes G g = g'' + (log rho)' g' = 2 - 2x^2
        c = poisson.LimitConstants(1.0, 1.0, 2.0)
        x = np.array([-1.5, 0.0, 1.0, 2.0])
        out = poisson.generator_limit(normal, lambda y: y ** 2, c, x,
                                      g_prime=lambda y: 2 * y, g_second=lambda y: 2.0 + 0 * y)
        np.testing.assert_allclose(out, 2 - 2 * x ** 2, atol=1e-14)
        fd = poisson.generator_limit(normal, lambda y: y ** 2, c, x)
        np.testing.assert_allclose(fd, 2 - 2 * x ** 2, atol=1e-5)

    def test_normal_anchor(self, normal_solution):
        # G fhat = -x exactly for fhat = 2x/h on N(0,1)
        dens, c, _ = normal_solution
        x = np.random.default_rng(3).normal(size=50) * 2
        out = poisson.generator_limit(dens, lambda y: 2 * y / c.h_l, c, x,
                                      g_prime=lambda y: np.full(np.shape(y), 2 / c.h_l),
                                      g_second=lambda y: np.zeros(np.shape(y)))
        np.testing.assert_allclose(out, -x, rtol=0, atol=1e-12)
