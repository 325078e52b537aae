import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from gamlsskit import _spline_py
from gamlsskit._kernels import BACKEND
from gamlsskit.errors import DegenerateInputError, DomainError
from gamlsskit.smoothers import (
    KnotGrid,
    edf_to_lambda,
    fit_cubic_spline,
    predict_spline,
    roughness,
    spline_derivative,
)

from .oracles import dense_smoother, mp_trace, reinsch_penalty


def jittered_grid(m, seed, jitter=0.3):
    """Equispaced points on [0, 1] with bounded jitter; well conditioned."""
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 1, m)
    x[1:-1] += rng.uniform(-jitter, jitter, m - 2) / (m - 1)
    return x


class TestDenseOracle:
    def test_sine_fifty_points(self):
        x = np.linspace(0, 1, 50)
        y = np.sin(2 * np.pi * x)
        fit = fit_cubic_spline(x, y, lam=0.01)
        S = dense_smoother(x, np.ones(50), 0.01)
        assert_allclose(fit.fitted, S @ y, atol=1e-8, rtol=0)
        assert fit.edf == pytest.approx(np.trace(S), abs=1e-8)

    @pytest.mark.parametrize("seed", range(6))
    def test_random_weighted_problems(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(10, 200))
        x = jittered_grid(m, seed) * rng.uniform(0.5, 20) + rng.normal()
        w = rng.uniform(0.2, 3.0, m)
        y = np.cos(3 * x) + rng.normal(0, 0.3, m)
        lam = 10 ** rng.uniform(-6, 0) * (x[-1] - x[0]) ** 3
        fit = fit_cubic_spline(x, y, w, lam)
        S = dense_smoother(x, w, lam)
        assert_allclose(fit.fitted, S @ y, atol=1e-8, rtol=0)
        assert fit.edf == pytest.approx(np.trace(S), abs=1e-8)

    def test_roughness_is_quadratic_form(self):
        x = jittered_grid(40, 3)
        y = np.sin(5 * x)
        fit = fit_cubic_spline(x, y, lam=1e-4)
        K = reinsch_penalty(x)
        assert roughness(fit) == pytest.approx(fit.values @ K @ fit.values, rel=1e-8)


class TestLimits:
    def test_huge_lambda_gives_weighted_line(self, rng):
        x = np.sort(rng.uniform(0, 1, 60))
        y = 2 + 3 * x + np.sin(8 * x) + rng.normal(0, 0.1, 60)
        w = rng.uniform(0.5, 2.0, 60)
        fit = fit_cubic_spline(x, y, w, 1e12)
        X = np.column_stack([np.ones(60), x])
        beta = np.linalg.solve(X.T @ (X * w[:, None]), X.T @ (w * y))
        assert_allclose(fit.fitted, X @ beta, atol=1e-6)
        assert fit.edf == pytest.approx(2.0, abs=1e-3)

    @pytest.mark.parametrize("lam", [1e2, 1e5, 1e8, 1e11])
    def test_trace_at_large_lambda_matches_high_precision(self, lam):
        x = jittered_grid(30, 11)
        w = np.random.default_rng(11).uniform(0.5, 2.0, 30)
        grid = KnotGrid(x)
        assert grid.trace(grid.aggregate(w), lam) == pytest.approx(mp_trace(x, w, lam), abs=1e-10)

    def test_zero_lambda_interpolates(self, rng):
        x = rng.uniform(0, 1, 30)
        y = rng.normal(size=30)
        fit = fit_cubic_spline(x, y, lam=0.0)
        assert_allclose(fit.fitted, y, rtol=0, atol=1e-14)
        assert fit.edf == 30

    def test_ties_merge_into_weighted_means(self):
        x = np.array([0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 3.0, 4.0])
        y = np.array([1.0, 3.0, 2.0, 0.0, 3.0, 6.0, 1.0, 2.0])
        fit = fit_cubic_spline(x, y, lam=0.0)
        assert_allclose(fit.values, [2.0, 2.0, 3.0, 1.0, 2.0])
        assert_allclose(fit.fitted, [2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 1.0, 2.0])


    def test_near_ties_share_a_knot(self):
        x = np.array([0.0, 1e-8, 1.0, 2.0, 3.0])
        y = np.array([1.0, 3.0, 0.0, 4.0, 1.0])
        fit = fit_cubic_spline(x, y, lam=0.0)
        assert_allclose(fit.knots, [0.0, 1.0, 2.0, 3.0])
        assert_allclose(fit.fitted, [2.0, 2.0, 0.0, 4.0, 1.0])

    def test_gaps_above_tolerance_kept(self):
        x = np.array([0.0, 1e-5, 1.0, 2.0, 3.0])
        assert KnotGrid(x).m == 5


class TestEdfCalibration:
    def test_thirty_points_target_five(self):
        x = np.linspace(0, 1, 30)
        lam = edf_to_lambda(x, np.ones(30), 5.0)
        assert np.trace(dense_smoother(x, np.ones(30), lam)) == pytest.approx(5.0, abs=1e-6)

    def test_full_df_means_zero_lambda(self):
        x = np.linspace(0, 1, 25)
        assert edf_to_lambda(x, np.ones(25), 25.0) == 0.0

    def test_near_linear_target_gives_large_lambda(self):
        x = np.linspace(0, 1, 30)
        # the trace approaches 2 like 0.079 / lam on this grid
        assert edf_to_lambda(x, np.ones(30), 2.0 + 1e-8) > 1e6

    @pytest.mark.parametrize("target", [2.0, 1.5, 31.0])
    def test_out_of_range(self, target):
        with pytest.raises(DomainError):
            edf_to_lambda(np.linspace(0, 1, 30), np.ones(30), target)

    @pytest.mark.parametrize("seed", range(5))
    def test_trace_hits_target_with_ties_and_weights(self, seed):
        rng = np.random.default_rng(seed)
        x = np.round(rng.uniform(0, 10, 500), 1)
        w = rng.uniform(0.1, 5.0, 500)
        target = float(rng.uniform(2.5, 15))
        lam = edf_to_lambda(x, w, target)
        grid = KnotGrid(x)
        assert grid.trace(grid.aggregate(w), lam) == pytest.approx(target, abs=1e-6)

    @pytest.mark.parametrize("target", [5.0, 12.0])
    def test_large_offset_with_near_duplicates(self, target):
        # projected coordinates: huge offset, wide range, a few values only
        # a rounding error apart; these once broke the factorisation
        rng = np.random.default_rng(47)
        x = 8.78e6 + rng.uniform(0, 2.9e4, 5000)
        x[:30] = x[30:60] + 2.7e-4
        w = rng.uniform(1.7, 45.0, 5000)
        grid = KnotGrid(x)
        W = grid.aggregate(w)
        lam = edf_to_lambda(x, w, target)
        assert grid.trace(W, lam) == pytest.approx(target, abs=1e-6)
        traces = [grid.trace(W, lam * f) for f in 10.0 ** np.arange(-4, 13)]
        assert all(b <= a + 1e-9 for a, b in zip(traces, traces[1:]))
        assert traces[-1] == pytest.approx(2.0, abs=1e-6)


class TestPrediction:
    def test_training_points_exact(self, rng):
        x = rng.uniform(0, 5, 80)
        y = np.sin(x) + rng.normal(0, 0.2, 80)
        fit = fit_cubic_spline(x, y, lam=0.05)
        assert_allclose(predict_spline(fit, x), fit.fitted, rtol=0, atol=1e-10)

    def test_constant_response(self, rng):
        x = rng.uniform(0, 5, 40)
        fit = fit_cubic_spline(x, np.full(40, 3.25), lam=0.7)
        assert_allclose(predict_spline(fit, np.linspace(-10, 10, 101)), 3.25, atol=1e-10)

    def test_linear_extrapolation(self, rng):
        x = np.sort(rng.uniform(0, 1, 50))
        y = np.exp(x) + rng.normal(0, 0.05, 50)
        fit = fit_cubic_spline(x, y, lam=1e-3)
        hi, lo = fit.knots[-1], fit.knots[0]
        for d in (0.1, 1.0, 5.0):
            assert predict_spline(fit, hi + d)[()] == pytest.approx(
                predict_spline(fit, hi)[()] + d * spline_derivative(fit, hi)[()], abs=1e-9)
            assert predict_spline(fit, lo - d)[()] == pytest.approx(
                predict_spline(fit, lo)[()] - d * spline_derivative(fit, lo)[()], abs=1e-9)

    def test_derivative_matches_finite_difference(self, rng):
        x = np.sort(rng.uniform(0, 1, 50))
        fit = fit_cubic_spline(x, np.sin(6 * x), lam=1e-5)
        z = np.linspace(0.05, 0.95, 37)
        h = 1e-6
        fd = (predict_spline(fit, z + h) - predict_spline(fit, z - h)) / (2 * h)
        assert_allclose(spline_derivative(fit, z), fd, atol=1e-6)

    def test_second_derivative_zero_at_ends(self, rng):
        fit = fit_cubic_spline(rng.uniform(0, 1, 30), rng.normal(size=30), lam=1e-3)
        assert fit.second_derivs[0] == 0.0 and fit.second_derivs[-1] == 0.0

    def test_roughness_by_quadrature(self, rng):
        x = np.sort(rng.uniform(0, 1, 25))
        fit = fit_cubic_spline(x, np.cos(4 * x) + rng.normal(0, 0.1, 25), lam=1e-4)
        h = 1e-4

        def f2(t):
            return ((predict_spline(fit, t + h) - 2 * predict_spline(fit, t) + predict_spline(fit, t - h)) / h**2)[()]

        pts = list(fit.knots)
        total = sum(integrate.quad(lambda t: f2(t) ** 2, a, b, epsabs=1e-10)[0] for a, b in zip(pts, pts[1:]))
        assert roughness(fit) == pytest.approx(total, rel=1e-4)

    def test_non_finite_prediction_input(self, rng):
        fit = fit_cubic_spline(rng.uniform(0, 1, 10), rng.normal(size=10), lam=0.1)
        with pytest.raises(DomainError):
            predict_spline(fit, np.array([0.5, np.nan]))


class TestErrors:
    def test_too_few_distinct(self):
        with pytest.raises(DegenerateInputError):
            fit_cubic_spline([0, 1, 1, 2, 2], [1, 2, 3, 4, 5], lam=0.1)

    def test_non_finite(self):
        with pytest.raises(DomainError):
            fit_cubic_spline([0, 1, 2, 3, np.inf], [1, 2, 3, 4, 5], lam=0.1)

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            fit_cubic_spline([0, 1, 2, 3, 4], [1, 2, 3, 4, 5], lam=-1.0)


class TestBackends:
    @pytest.mark.skipif(BACKEND != "cython", reason="compiled kernel unavailable")
    @pytest.mark.parametrize("seed", range(4))
    def test_compiled_matches_pure_python(self, seed):
        from gamlsskit import _spline_core

        rng = np.random.default_rng(seed)
        m = 150
        grid = KnotGrid(jittered_grid(m, seed))
        G = grid.gram(grid.aggregate(rng.uniform(0.5, 2, m)))
        rhs = rng.normal(size=grid.K)
        for lam in (1e-8, 1e-4, 1.0):
            assert_allclose(_spline_core.band_solve(G, grid.penalty, rhs, lam),
                            _spline_py.band_solve(G, grid.penalty, rhs, lam), rtol=1e-12, atol=1e-12)
            assert _spline_core.band_trace(G, grid.penalty, lam) == pytest.approx(
                _spline_py.band_trace(G, grid.penalty, lam), rel=1e-12)

    def test_not_positive_definite_raises(self):
        G = np.zeros((4, 6))
        O = np.zeros((4, 6))
        with pytest.raises(FloatingPointError):
            _spline_py.band_trace(G, O, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(6, 60), st.integers(0, 10_000), st.floats(-8, 2), st.floats(-3, 3), st.floats(-3, 3))
def test_reproduces_lines_for_any_lambda(m, seed, loglam, a, b):
    x = jittered_grid(m, seed)
    w = np.random.default_rng(seed).uniform(0.2, 3, m)
    fit = fit_cubic_spline(x, a + b * x, w, 10.0**loglam)
    assert_allclose(fit.fitted, a + b * x, atol=1e-8 * (1 + abs(a) + abs(b)))


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 80), st.integers(0, 10_000))
def test_trace_nonincreasing_in_lambda(m, seed):
    x = jittered_grid(m, seed)
    grid = KnotGrid(x)
    W = grid.aggregate(np.random.default_rng(seed).uniform(0.5, 2, m))
    traces = [grid.trace(W, lam) for lam in 10.0 ** np.arange(-8, 8.5, 0.5)]
    assert np.all(np.diff(traces) <= 1e-9)
    assert 2 - 1e-6 <= min(traces) and max(traces) <= m + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 200), st.integers(0, 10_000), st.floats(-5, 1))
def test_banded_equals_dense(m, seed, loglam):
    x = jittered_grid(m, seed)
    rng = np.random.default_rng(seed)
    y = rng.normal(size=m)
    w = rng.uniform(0.5, 2.0, m)
    lam = 10.0**loglam
    fit = fit_cubic_spline(x, y, w, lam)
    assert_allclose(fit.fitted, dense_smoother(x, w, lam) @ y, atol=1e-8, rtol=0)
