import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from gamlsskit.baselines import (
    box_cox_profile,
    box_cox_transform,
    breusch_pagan,
    glm_fit_gamma_log,
    hc3_se,
    jarque_bera,
    ols_fit,
)
from gamlsskit.errors import DomainError, InsufficientDataError, LeverageError, RankError

from .oracles import normal_equations

# five-point fixture; the sandwich below was worked out in exact rationals
X5 = np.column_stack([np.ones(5), np.arange(1.0, 6.0)])
Y5 = np.array([2.0, 3.0, 5.0, 4.0, 6.0])


def hc3_by_hand():
    x = [1, 2, 3, 4, 5]
    inv = [[Fraction(55, 50), Fraction(-15, 50)], [Fraction(-15, 50), Fraction(5, 50)]]
    e = [Fraction(-1, 5), Fraction(-1, 10), Fraction(1), Fraction(-9, 10), Fraction(1, 5)]
    h = [Fraction(55 - 30 * v + 5 * v * v, 50) for v in x]
    w = [(ei / (1 - hi)) ** 2 for ei, hi in zip(e, h)]
    cols = ([1] * 5, x)
    meat = [[sum(wi * a * b for wi, a, b in zip(w, r, s)) for s in cols] for r in cols]

    def mul(A, B):
        return [[sum(A[i][k] * B[k][j] for k in range(2)) for j in range(2)] for i in range(2)]

    return mul(mul(inv, meat), inv)


def box_cox_sample(lam, seed, n=2000):
    """Responses whose transform at ``lam`` is linear in x plus normal noise.

    y runs over roughly [1.5, 9]; the estimator's sd is then about 0.016.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, n)
    a, b = box_cox_transform(np.array([1.5, 9.0]), lam)
    z = a + (b - a) * x + 0.05 * (b - a) * rng.normal(size=n)
    y = np.exp(z) if lam == 0 else (lam * z + 1.0) ** (1.0 / lam)
    return y, np.column_stack([np.ones(n), x])


def design(rng, n, p=3):
    return np.column_stack([np.ones(n), rng.normal(size=(n, p))])


class TestOls:
    def test_exact_line(self):
        x = np.arange(10.0)
        f = ols_fit(np.column_stack([np.ones(10), x]), 3.0 - 2.0 * x)
        assert_allclose(f.beta, [3.0, -2.0], atol=1e-12)
        assert f.rss < 1e-20
        assert f.r2 == pytest.approx(1.0)

    def test_intercept_only_is_mean(self, rng):
        y = rng.normal(5, 2, 40)
        f = ols_fit(np.ones((40, 1)), y)
        assert_allclose(f.beta, [y.mean()], rtol=1e-14)
        assert_allclose(f.se, [y.std(ddof=1) / math.sqrt(40)], rtol=1e-12)

    def test_matches_normal_equations(self, rng):
        X = design(rng, 30)
        y = X @ [1.0, -0.5, 2.0, 0.3] + rng.normal(size=30)
        f = ols_fit(X, y)
        assert_allclose(f.beta, normal_equations(X, y), rtol=1e-10)

    def test_residuals_orthogonal_to_design(self, rng):
        X = design(rng, 200)
        y = rng.normal(size=200)
        f = ols_fit(X, y)
        assert_allclose(X.T @ f.residuals, 0.0, atol=1e-10)

    def test_hat_diagonals_sum_to_p(self, rng):
        X = design(rng, 60, 4)
        f = ols_fit(X, rng.normal(size=60))
        assert f.hat_diagonals.sum() == pytest.approx(5.0, abs=1e-12)
        assert np.all((f.hat_diagonals > 0) & (f.hat_diagonals < 1))

    def test_bic_minus_aic(self, rng):
        X = design(rng, 77)
        f = ols_fit(X, rng.normal(size=77))
        assert f.n_params == 5
        assert f.bic - f.aic == pytest.approx((math.log(77) - 2.0) * 5, rel=1e-12)

    def test_loglik_is_gaussian_at_ml_variance(self, rng):
        X = design(rng, 50)
        y = rng.normal(size=50)
        f = ols_fit(X, y)
        s = math.sqrt(f.rss / 50)
        assert f.loglik == pytest.approx(stats.norm.logpdf(f.residuals, scale=s).sum(), rel=1e-12)

    def test_rank_deficient_names_columns(self, rng):
        x = rng.normal(size=20)
        X = np.column_stack([np.ones(20), x, 2 * x])
        with pytest.raises(RankError, match="b"):
            ols_fit(X, rng.normal(size=20), names=("one", "a", "b"))

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            ols_fit(np.ones((2, 2)), [1.0, 2.0])


class TestHc3:
    def test_five_point_fixture(self):
        f = ols_fit(X5, Y5)
        V = hc3_by_hand()
        assert V[0][0] == Fraction(5569, 19600) and V[1][1] == Fraction(9, 245)
        assert_allclose(f.beta, [1.3, 0.9], rtol=1e-14)
        assert_allclose(f.hat_diagonals, [0.6, 0.3, 0.2, 0.3, 0.6], rtol=1e-14)
        exact = [math.sqrt(V[0][0]), math.sqrt(V[1][1])]
        assert_allclose(f.se_hc3, exact, rtol=1e-14)
        assert_allclose(hc3_se(f, X5), exact, rtol=1e-14)
        assert_allclose(f.vcov_hc3[0, 1], float(V[0][1]), rtol=1e-14)

    def test_close_to_classical_when_homoskedastic(self, rng):
        X = design(rng, 5000)
        f = ols_fit(X, X @ [1, 2, 3, 4] + rng.normal(size=5000))
        assert_allclose(f.se_hc3 / f.se, 1.0, atol=0.02)

    def test_balanced_groups(self, rng):
        # one-way layout with 4 groups of 50; HC3 uses within-group spread
        g = np.repeat(np.arange(4), 50)
        X = (g[:, None] == np.arange(4)).astype(float)
        y = rng.normal(0, 1 + g, 200)
        f = ols_fit(X, y)
        grp_sd = np.array([y[g == k].std(ddof=1) for k in range(4)])
        assert_allclose(f.se_hc3, grp_sd / math.sqrt(50), rtol=0.1)

    def test_full_leverage_raises(self):
        X = np.column_stack([np.ones(6), [0, 0, 0, 0, 0, 1.0]])
        f = ols_fit(X, [1.0, 2, 3, 2, 1, 5])
        assert f.vcov_hc3 is None
        with pytest.raises(LeverageError):
            hc3_se(f, X)


class TestBoxCox:
    def test_transform_limits(self):
        y = np.array([0.5, 1.0, 2.0, 7.0])
        assert_allclose(box_cox_transform(y, 0.0), np.log(y))
        assert_allclose(box_cox_transform(y, 1.0), y - 1.0)
        assert_allclose(box_cox_transform(y, 1e-9), np.log(y), rtol=1e-8)

    def test_non_positive_rejected(self):
        with pytest.raises(DomainError):
            box_cox_transform([1.0, 0.0], 0.5)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_recovers_lambda(self, lam):
        y, X = box_cox_sample(lam, int(lam * 10) + 3)
        assert abs(box_cox_profile(y, X).lambda_hat - lam) < 0.05

    @given(st.floats(0.01, 100.0))
    @settings(max_examples=20, deadline=None)
    def test_scale_invariant(self, c):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, 300)
        y = np.exp(1 + x + 0.2 * rng.normal(size=300))
        X = np.column_stack([np.ones(300), x])
        assert box_cox_profile(c * y, X).lambda_hat == pytest.approx(box_cox_profile(y, X).lambda_hat, abs=1e-3)

    def test_profile_at_one_is_ols_loglik(self, rng):
        x = rng.uniform(0, 1, 100)
        y = 3 + x + rng.uniform(0, 1, 100)
        X = np.column_stack([np.ones(100), x])
        res = box_cox_profile(y, X, lambda_grid=[-2.0, -1.0, 0.0, 1.0, 2.0])
        assert res.profile[3] == pytest.approx(ols_fit(X, y).loglik, rel=1e-12)

    def test_grid_must_span(self):
        with pytest.raises(DomainError):
            box_cox_profile(np.ones(10) + np.arange(10), np.ones((10, 1)), lambda_grid=[0, 1, 2])


class TestSpecificationTests:
    def test_jarque_bera_two_point(self):
        # S = 0, K = 1 gives n/6 exactly
        jb, _ = jarque_bera(np.tile([-1.0, 1.0], 30))
        assert jb == pytest.approx(60 / 6, rel=1e-14)

    def test_jarque_bera_normal_quantiles(self):
        e = stats.norm.ppf((np.arange(1, 501) - 0.5) / 500)
        assert jarque_bera(e)[1] > 0.5

    def test_jarque_bera_skewed(self, rng):
        assert jarque_bera(rng.exponential(size=500))[1] < 0.01

    def test_jarque_bera_short(self):
        with pytest.raises(InsufficientDataError):
            jarque_bera(np.arange(7.0))

    def test_breusch_pagan_constant_squares(self):
        X = np.column_stack([np.ones(20), np.arange(20.0)])
        assert breusch_pagan(X, np.tile([1.0, -1.0], 10)) == (0.0, 1.0)

    def test_breusch_pagan_detects_variance_trend(self, rng):
        x = rng.uniform(0, 1, 500)
        X = np.column_stack([np.ones(500), x])
        e = rng.normal(size=500) * (0.2 + 3 * x)
        assert breusch_pagan(X, e)[1] < 0.01

    def test_breusch_pagan_is_n_r2(self, rng):
        X = design(rng, 80, 2)
        e = rng.normal(size=80)
        stat, p = breusch_pagan(X, e)
        aux = ols_fit(X, e**2)
        assert stat == pytest.approx(80 * aux.r2, rel=1e-12)
        assert p == pytest.approx(stats.chi2.sf(stat, 2), rel=1e-12)


class TestGammaGlm:
    def test_intercept_only(self, rng):
        y = rng.gamma(2.0, 3.0, 100)
        f = glm_fit_gamma_log(np.ones((100, 1)), y)
        assert math.exp(f.beta[0]) == pytest.approx(y.mean(), rel=1e-12)

    def test_recovers_coefficients(self):
        rng = np.random.default_rng(17)
        X = np.column_stack([np.ones(3000), rng.uniform(-1, 1, (3000, 2))])
        beta = np.array([1.0, 0.5, -0.3])
        mu = np.exp(X @ beta)
        y = rng.gamma(1 / 0.4**2, mu * 0.4**2)
        f = glm_fit_gamma_log(X, y)
        assert np.all(np.abs(f.beta - beta) < 3 * f.se)
        assert f.sigma_ml == pytest.approx(0.4, rel=0.05)

    def test_score_vanishes(self, rng):
        X = np.column_stack([np.ones(400), rng.normal(size=(400, 2))])
        y = rng.gamma(3.0, np.exp(X @ [0.2, 0.1, -0.2]) / 3.0)
        f = glm_fit_gamma_log(X, y)
        assert np.max(np.abs(X.T @ ((y - f.mu_hat) / f.mu_hat))) < 1e-6

    def test_loglik_matches_scipy(self, rng):
        X = np.column_stack([np.ones(200), rng.normal(size=200)])
        y = rng.gamma(2.0, np.exp(X @ [1.0, 0.3]) / 2.0)
        f = glm_fit_gamma_log(X, y)
        a = 1 / f.sigma_ml**2
        ref = stats.gamma.logpdf(y, a, scale=f.mu_hat / a).sum()
        assert f.loglik == pytest.approx(ref, rel=1e-12)
        assert f.aic == pytest.approx(-2 * ref + 2 * 3, rel=1e-12)

    def test_rejects_non_positive(self):
        with pytest.raises(DomainError):
            glm_fit_gamma_log(np.ones((4, 1)), [1.0, 2.0, 0.0, 3.0])
