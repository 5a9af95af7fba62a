import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfinite import spline1d as s1
from transfinite.analysis import GaussPoly, natural_cubic_oracle
from transfinite.errors import (
    CompetitorNotInterpolating,
    DerivativeOrderTooHigh,
    InsufficientKnots,
    InvalidKnots,
    PsiNotVanishing,
    XiBelowHalf,
)
from transfinite.kernel import KernelParams, eval_kernel, kernel_coefficients


def sup_rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)


def rounding_floor(s):
    """Relative accuracy attainable when the kernel weights cancel: small |xi| with p = 3
    gives weights near 1e5 for O(1) data."""
    if s.rbf_coeffs is None:
        return 1e-9
    c0 = kernel_coefficients(s.p).c0_diag
    size = c0 * np.sum(np.abs(s.rbf_coeffs)) / max(np.max(np.abs(s.values)), 1e-300)
    return max(1e-9, 64 * np.finfo(float).eps * size)


@st.composite
def spline_setups(draw, xi_values=(0.3, 1.0, 5.0)):
    p = draw(st.sampled_from([2, 3]))
    N = draw(st.integers(p - 1, 6))
    gaps = draw(st.lists(st.floats(0.3, 1.5), min_size=N, max_size=N))
    knots = np.concatenate([[0.0], np.cumsum(gaps)])
    y = np.array(draw(st.lists(st.floats(-1, 1), min_size=N + 1, max_size=N + 1)))
    xi = draw(st.sampled_from(xi_values))
    return p, xi, knots, y


class TestKnotSet:
    def test_min_gap(self):
        assert s1.KnotSet([0, 0.5, 2.0]).min_gap == 0.5

    @pytest.mark.parametrize("bad", [[0, 0, 1], [1, 0.5], [0.0], [0, np.nan]])
    def test_invalid(self, bad):
        with pytest.raises(InvalidKnots):
            s1.KnotSet(bad)

    def test_order_check(self):
        with pytest.raises(InsufficientKnots):
            s1.KnotSet([0, 1]).check_order(3)


class TestGram:
    def test_p2_three_knots(self):
        M = s1.build_gram(KernelParams(2, 1.0), [0, 1, 2]).entries
        # first row 2, 4/e, 6/e^2 (symbolic values)
        np.testing.assert_allclose(M[0], [2.0, 1.4715177646857693, 0.81201169941967615], rtol=1e-15)
        np.testing.assert_array_equal(M, M.T)
        assert M[0, 1] == M[1, 2]

    def test_dominant_regime(self):
        rep = s1.diag_dominance_report(KernelParams(2, 10.0), [0, 1, 2])
        M = s1.build_gram(KernelParams(2, 10.0), [0, 1, 2]).entries
        assert np.max(M - np.diag(np.diag(M))) <= 2.0 / (2 * 2)
        assert rep.dominant

    def test_single_interval_large_gap(self):
        rep = s1.diag_dominance_report(KernelParams(3, 1.0), [0, 60])
        assert rep.rho < 1e-20
        assert rep.bound == pytest.approx(kernel_coefficients(3).c0_diag)


class TestLagrange:
    def test_identity_at_knots(self):
        knots = [0, 0.7, 1.5, 2.8]
        basis = s1.solve_lagrange(KernelParams(3, 1.2), knots)
        vals = np.array([s1.lagrange_function(basis, j)(np.array(knots)) for j in range(4)])
        np.testing.assert_allclose(vals, np.eye(4), atol=1e-10)
        assert basis.residual <= 1e-10 * 12

    def test_kernel_translate_reproduced(self):
        params = KernelParams(2, 1.5)
        knots = np.array([0, 0.6, 1.7, 2.5])
        s = s1.interpolate(s1.solve_lagrange(params, knots), eval_kernel(params, knots - knots[0]))
        t = np.linspace(-3, 5, 201)
        assert sup_rel(s(t), eval_kernel(params, t - knots[0])) <= 1e-9

    def test_pure_exponential_is_not_a_natural_spline(self):
        # e^{-|xi| t} on [t_0, inf) has no C^(2p-2) extension into the left tail
        # kernel, so the interpolant of its samples differs from it
        params = KernelParams(2, 1.0)
        knots = np.array([0.0, 1.0])
        s = s1.interpolate(s1.solve_lagrange(params, knots), np.exp(-knots))
        c = s1.collocation_solve(params, knots, np.exp(-knots))
        t = np.linspace(0, 4, 41)
        assert sup_rel(s(t), c(t)) <= 1e-9
        assert np.max(np.abs(s(t) - np.exp(-t))) > 1e-2

    def test_zero_xi_rejected(self):
        with pytest.raises(ValueError):
            s1.solve_lagrange(KernelParams(2, 0.0), [0, 1, 2])


class TestInterpolate:
    def test_frozen_p2(self):
        # sympy closed form of the Gram solve for knots 0,1,2 and data 0,1,0
        s = s1.natural_spline(2, 1.0, [0, 1, 2], np.array([0.0, 1.0, 0.0]))
        assert s(0.5) == pytest.approx(0.61660522086934782920, rel=1e-14)
        assert s(-1.3) == pytest.approx(-0.34855907754502706839, rel=1e-13)
        assert s1.energy_1d(s) == pytest.approx(17.394411296713924247, rel=1e-13)

    def test_zero_data(self):
        s = s1.natural_spline(3, 2.0, [0, 1, 2], np.zeros(3))
        assert np.all(s(np.linspace(-3, 5, 11)) == 0)

    @given(spline_setups())
    @settings(max_examples=30, deadline=None)
    def test_superposition(self, setup):
        p, xi, knots, y = setup
        z = np.cos(np.arange(len(knots)))
        basis = s1.solve_lagrange(KernelParams(p, xi), knots)
        t = np.linspace(knots[0] - 2, knots[-1] + 2, 51)
        lhs = s1.interpolate(basis, y + z)(t)
        rhs = s1.interpolate(basis, y)(t) + s1.interpolate(basis, z)(t)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(lhs)))

    @given(spline_setups())
    @settings(max_examples=30, deadline=None)
    def test_representations_agree(self, setup):
        p, xi, knots, y = setup
        s = s1.natural_spline(p, xi, knots, y)
        t = np.linspace(knots[0] - 2, knots[-1] + 2, 301)
        tol = rounding_floor(s)
        for m in range(2 * p - 1):
            assert sup_rel(s(t, m), s.evaluate_rbf(t, m)) <= tol
        assert np.max(np.abs(s(knots) - y)) <= tol * max(1.0, np.max(np.abs(y)))

    def test_far_field_decay(self):
        knots = np.array([0, 1, 2.5])
        for xi in (0.5, 2.0, 30.0):
            s = s1.natural_spline(2, xi, knots, np.array([1.0, -1.0, 0.5]))
            assert abs(s(knots[-1] + 40 / xi)) <= 1e-12 * 1.0

    def test_large_xi_no_overflow(self):
        knots = np.linspace(0, 30, 7)
        s = s1.natural_spline(3, 60.0, knots, np.ones(7))
        v = s(np.linspace(-5, 35, 401), 2)
        assert np.all(np.isfinite(v))

    def test_derivative_cap(self):
        s = s1.natural_spline(2, 1.0, [0, 1, 2], np.ones(3))
        with pytest.raises(DerivativeOrderTooHigh):
            s(0.5, 3)
        assert np.isfinite(s.one_sided(0.5, 3, "+"))

    def test_first_derivative_by_finite_difference(self):
        s = s1.natural_spline(3, 1.7, [0, 0.8, 2.0], np.array([0.3, -1.0, 0.4]))
        h = 1e-5
        for t in (-0.7, 0.4, 1.3, 2.9):
            fd = (s(t + h) - s(t - h)) / (2 * h)
            assert s(t, 1) == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestSmoothnessAndTails:
    @given(spline_setups(xi_values=(0.0, 0.5, 1.0, 4.0, 20.0)))
    @settings(max_examples=30, deadline=None)
    def test_smoothness_class(self, setup):
        p, xi, knots, y = setup
        s = s1.natural_spline(p, xi, knots, y)
        grid = np.linspace(knots[0] - 2, knots[-1] + 2, 401)
        scale = 1e-300
        for m in range(2 * p - 1):
            # orders that vanish identically are measured against lower orders
            scale = max(scale, np.max(np.abs(s(grid, m))))
            jump = np.abs(s.one_sided(knots, m, "+") - s.one_sided(knots, m, "-"))
            assert np.max(jump) <= 1e-8 * scale

    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("xi", [0.7, 3.0])
    def test_tails_in_operator_kernels(self, p, xi):
        s = s1.natural_spline(p, xi, [0, 0.9, 2.0, 2.6], np.array([1.0, -0.5, 0.25, 2.0]))
        left = s.pieces[0].terms
        right = s.pieces[-1].terms
        assert all(not np.any(e.shift_factor(xi, p).b) for e in left)
        assert all(not np.any(e.shift_factor(-xi, p).b) for e in right)

    def test_zero_xi_tails_are_low_degree(self):
        s = s1.natural_spline_zero(3, [0, 1, 2, 3.5], np.array([0.0, 1.0, -1.0, 0.5]))
        for piece in (s.pieces[0], s.pieces[-1]):
            assert all(len(e.b) <= 3 for e in piece.terms)
        grid = np.linspace(-3, -0.1, 5)
        assert np.max(np.abs(s.one_sided(grid, 3, "-"))) < 1e-12


class TestZeroFrequency:
    def test_natural_cubic_example(self):
        s = s1.natural_spline_zero(2, [0, 1, 2], np.array([0.0, 1.0, 0.0]))
        assert s(0.5) == pytest.approx(0.6875, rel=1e-14)
        # int s''^2 with s'' piecewise linear through 0, -3, 0
        assert s1.energy_1d(s) == pytest.approx(6.0, rel=1e-13)

    def test_against_scipy_natural_cubic(self, rng):
        knots = np.sort(rng.uniform(0, 5, 7))
        y = rng.uniform(-1, 1, 7)
        s = s1.natural_spline_zero(2, knots, y)
        t = np.linspace(knots[0], knots[-1], 200)
        assert sup_rel(s(t), natural_cubic_oracle(knots, y)(t)) <= 1e-12

    def test_constant_and_linear(self):
        knots = [0, 0.5, 1.7, 3.0]
        t = np.linspace(-4, 6, 21)
        np.testing.assert_allclose(s1.natural_spline_zero(3, knots, np.full(4, 2.5))(t), 2.5, rtol=1e-12)
        np.testing.assert_allclose(s1.natural_spline_zero(2, knots, np.array(knots, float))(t), t, atol=1e-12)

    def test_insufficient_knots(self):
        with pytest.raises(InsufficientKnots):
            s1.natural_spline_zero(3, [0, 1], np.zeros(2))

    @pytest.mark.parametrize("p", [2, 3])
    def test_against_collocation(self, p, rng):
        knots = np.cumsum(rng.uniform(0.4, 1.2, 6))
        y = rng.uniform(-1, 1, 6)
        s = s1.natural_spline_zero(p, knots, y)
        c = s1.collocation_solve(KernelParams(p, 0.0), knots, y)
        t = np.linspace(knots[0] - 2, knots[-1] + 2, 301)
        for m in range(2 * p - 1):
            assert sup_rel(s(t, m), c(t, m)) <= 1e-9


class TestCollocation:
    def test_dimension(self):
        sys = s1.collocation_system(KernelParams(2, 1.0), [0, 1, 2], np.zeros(3))
        assert sys.matrix.shape == (8, 8)

    @pytest.mark.parametrize("p", [2, 3, 4])
    @pytest.mark.parametrize("N", [3, 5])
    def test_dimension_count(self, p, N):
        sys = s1.collocation_system(KernelParams(p, 0.8), np.arange(N + 1.0), np.zeros(N + 1))
        assert sys.size == (2 * p - 1) * (N - 1) + 2 * (p - 1) + (N + 1) == 2 * p * N

    @given(spline_setups())
    @settings(max_examples=30, deadline=None)
    def test_agrees_with_rbf_path(self, setup):
        p, xi, knots, y = setup
        s = s1.natural_spline(p, xi, knots, y)
        c = s1.collocation_solve(KernelParams(p, xi), knots, y)
        t = np.linspace(knots[0] - 2, knots[-1] + 2, 301)
        tol = rounding_floor(s)
        for m in range(2 * p - 1):
            assert sup_rel(s(t, m), c(t, m)) <= tol

    def test_zero_data(self):
        c = s1.collocation_solve(KernelParams(3, 1.0), [0, 1, 2, 3], np.zeros(4))
        assert np.all(c(np.linspace(-2, 5, 9)) == 0)


def psi_for(knots, rng):
    return GaussPoly.vanishing_at(knots, rng.uniform(knots[0], knots[-1]), rng.uniform(0.5, 2.0),
                                  complex(rng.standard_normal(), rng.standard_normal()))


class TestIdentities:
    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("xi", [0.5, 1.0, 4.0])
    def test_fundamental_identity(self, p, xi, rng):
        knots = np.array([0, 0.8, 1.5, 2.7])
        s = s1.natural_spline(p, xi, knots, rng.uniform(-1, 1, 4) + 1j * rng.uniform(-1, 1, 4))
        for _ in range(3):
            psi = psi_for(knots, rng)
            a = s1.fundamental_identity_residual(s, psi, -1)
            b = s1.fundamental_identity_residual(s, psi, +1)
            assert a.relative <= 1e-7
            assert abs(a.value - b.value) <= 1e-9 * a.scale

    def test_zero_psi(self):
        s = s1.natural_spline(2, 1.0, [0, 1, 2], np.array([0.0, 1.0, 0.0]))
        r = s1.fundamental_identity_residual(s, GaussPoly(1.0, 1.0, [0.0]))
        assert r.value == 0

    def test_psi_must_vanish(self):
        s = s1.natural_spline(2, 1.0, [0, 1, 2], np.array([0.0, 1.0, 0.0]))
        with pytest.raises(PsiNotVanishing):
            s1.fundamental_identity_residual(s, GaussPoly(1.0, 1.0, [1.0]))

    @pytest.mark.parametrize("xi", [0.5, 2.0])
    def test_binomial_identity_and_sign_flip(self, xi, rng):
        knots = np.array([0, 1.1, 1.9])
        s = s1.natural_spline(2, xi, knots, np.array([0.4, -0.2, 1.0]))
        psi = GaussPoly(0.7, 1.3, [1.0, 0.5])
        lhs, rhs = s1.binomial_identity_check(s, psi, -1)
        lhs_adj, _ = s1.binomial_identity_check(s, psi, +1)
        assert abs(lhs - rhs) <= 1e-7 * abs(rhs)
        assert abs(lhs_adj - lhs) <= 1e-9 * abs(rhs)

    def test_binomial_expansion_brute_force(self):
        # p = 2: expand (s'' - 2 xi s' + xi^2 s) directly
        xi = 1.3
        knots = np.array([0, 1.0, 2.2])
        s = s1.natural_spline(2, xi, knots, np.array([1.0, 0.0, -0.5]))
        psi = GaussPoly(1.0, 0.8, [0.3, -1.0])
        nodes, weights = np.polynomial.legendre.leggauss(200)
        lo, hi = -12.0, 14.0
        t = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * weights
        # split by knots for accuracy
        total = 0.0
        for a, b in zip([lo, *knots], [*knots, hi]):
            tt = 0.5 * (b - a) * nodes + 0.5 * (b + a)
            ww = 0.5 * (b - a) * weights
            bs = s(tt, 2) - 2 * xi * s(tt, 1) + xi**2 * s(tt)
            bp = psi(tt, 2) - 2 * xi * psi(tt, 1) + xi**2 * psi(tt)
            total += np.sum(ww * bs * bp)
        lhs, _ = s1.binomial_identity_check(s, psi)
        assert lhs == pytest.approx(total, rel=1e-9)


class TestEnergy:
    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("xi", [0.3, 1.0, 6.0])
    def test_exact_vs_quadrature(self, p, xi, rng):
        knots = np.cumsum(rng.uniform(0.3, 1.2, 5))
        s = s1.natural_spline(p, xi, knots, rng.uniform(-1, 1, 5))
        e = s1.energy_1d(s)
        assert e == pytest.approx(s1.energy_by_quadrature(s, p, xi, knots), rel=1e-8)
        assert e == pytest.approx(sum(s1.binomial_terms(s).values()).real, rel=1e-10)

    def test_single_knot_dominant_spline(self):
        params = KernelParams(2, 1.5)
        knots = np.array([0.0, 3.0, 6.0])
        s = s1.interpolate(s1.solve_lagrange(params, knots), np.array([1.0, 0.0, 0.0]))
        assert s1.energy_1d(s) == pytest.approx(s1.energy_by_quadrature(s, 2, 1.5, knots), rel=1e-8)

    def test_zero_data(self):
        assert s1.energy_1d(s1.natural_spline(2, 1.0, [0, 1, 2], np.zeros(3))) == 0


class TestVariational:
    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("xi", [0.5, 2.0])
    def test_competitors_cost_more(self, p, xi, rng):
        knots = np.array([0, 0.9, 1.6, 2.8])
        s = s1.natural_spline(p, xi, knots, rng.uniform(-1, 1, 4))
        comps = [s1.perturb(s, psi_for(knots, rng)) for _ in range(20)]
        for rec in s1.variational_check_1d(s, comps):
            assert rec.margin > 0
            assert rec.pythagoras_error <= 1e-7

    def test_self_is_equality(self):
        s = s1.natural_spline(2, 1.0, [0, 1, 2], np.array([0.0, 1.0, 0.0]))
        rec, = s1.variational_check_1d(s, [s])
        assert abs(rec.margin) <= 1e-9 * rec.energy_spline

    def test_non_interpolating_rejected(self):
        s = s1.natural_spline(2, 1.0, [0, 1, 2], np.array([0.0, 1.0, 0.0]))
        with pytest.raises(CompetitorNotInterpolating):
            s1.variational_check_1d(s, [GaussPoly(1.0, 1.0, [1.0])])


class TestStability:
    def test_no_growth(self):
        rep = s1.stability_scan(2, [0, 1, 2.5], [0.5, 1, 2, 4, 8, 16, 32], [0, 1, 2])
        for m in range(3):
            assert rep.growth(m, 32, 2) <= 2.0
        # L_j(t_j) = 1
        assert min(rep.worst(x, 0) for x in (0.5, 32)) >= 0.5 - 1e-12

    def test_below_half(self):
        with pytest.raises(XiBelowHalf):
            s1.stability_scan(2, [0, 1, 2], [0.4], [0])

    def test_coefficients_stay_bounded(self):
        knots = [0, 0.7, 1.5, 2.6]
        amax = [np.max(np.abs(s1.solve_lagrange(KernelParams(2, x), knots).a)) for x in (0.5, 2, 8, 32, 64)]
        assert max(amax[2:]) <= 2 * max(amax[:2])


class TestPositiveDefinite:
    @pytest.mark.parametrize("p", [2, 3, 5])
    @pytest.mark.parametrize("xi", [0.01, 0.5, 3.0])
    def test_quadratic_form(self, p, xi, rng):
        knots = np.cumsum(rng.uniform(0.1, 1.0, 7))
        M = s1.build_gram(KernelParams(p, xi), knots).entries
        v = rng.standard_normal((100, 7))
        assert np.all(np.einsum("ij,jk,ik->i", v, M, v) > 0)

    @pytest.mark.parametrize("p", [2, 3])
    def test_eigenvalue_bound_past_mu(self, p):
        knots = [0, 0.4, 1.5, 1.9, 3.0]
        mu = s1.diag_dominance_report(KernelParams(p, 1.0), knots).mu
        c0 = kernel_coefficients(p).c0_diag
        for factor in (1.0, 1.2, 2.0, 5.0):
            rep = s1.diag_dominance_report(KernelParams(p, mu * factor), knots)
            assert rep.dominant
            assert rep.lambda_min >= c0 / 2
            assert rep.bound >= c0 / 2
