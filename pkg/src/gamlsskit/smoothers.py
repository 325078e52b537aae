"""Natural cubic smoothing splines with effective-df calibration.

A spline term ``cs(x, df=k)`` minimises

    sum_i w_i (y_i - f(x_i))^2 + lam * integral f''(t)^2 dt

over natural cubic splines with knots at the unique ``x`` values.  Tied
``x`` are merged into one knot carrying the summed weight and the
weighted mean response; values closer than ``TIE_TOL`` times the range of
``x`` count as tied and share the knot at the smallest of them.  The fit
is solved in the cubic B-spline basis on the knots, whose penalised
normal equations are banded (three sub-diagonals); the smoother trace
comes from the band of the inverse via the Hutchinson-de Hoog recursion
(``gamlsskit._kernels``).

Internally knots are rescaled to [0, 1].  ``lam`` is always reported in
the units of the original ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline, CubicSpline
from scipy.optimize import brentq

from . import _kernels
from .errors import DegenerateInputError, DomainError

# penalty-to-data balance beyond which the banded factorisation is no
# longer trusted; larger penalties use the 1/lam asymptote from here
MAX_BALANCE = 1e11
# x values within this fraction of the range share a knot
TIE_TOL = 1e-6

__all__ = [
    "SmootherFit",
    "KnotGrid",
    "fit_cubic_spline",
    "edf_to_lambda",
    "predict_spline",
    "spline_derivative",
    "roughness",
]


@dataclass(frozen=True)
class SmootherFit:
    """A fitted natural cubic spline.

    ``values`` and ``second_derivs`` are the spline and its second
    derivative at ``knots``; together they determine the spline everywhere.
    """

    knots: np.ndarray
    values: np.ndarray
    second_derivs: np.ndarray
    lam: float
    edf: float
    fitted: np.ndarray

    def __call__(self, x_new):
        return predict_spline(self, x_new)

    def shifted(self, intercept: float, slope: float, x=None) -> "SmootherFit":
        """Copy with the line ``intercept + slope * x`` subtracted.

        ``x`` are the training covariate values; without them the copy has
        ``fitted=None``.
        """
        fitted = None
        if x is not None and self.fitted is not None:
            fitted = self.fitted - intercept - slope * np.asarray(x, dtype=float)
        return SmootherFit(
            knots=self.knots,
            values=self.values - intercept - slope * self.knots,
            second_derivs=self.second_derivs,
            lam=self.lam,
            edf=self.edf,
            fitted=fitted,
        )


class KnotGrid:
    """Sorted unique knots for one covariate, reused across refits.

    The natural smoothing spline is computed in the cubic B-spline basis on
    the knot sequence (clamped at both ends, ``m + 2`` basis functions).
    The basis values at the knots, their second derivatives and the
    roughness penalty depend only on the knots and are built once here;
    each refit only re-weights the banded Gram matrix.
    """

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DomainError("x", "must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise DomainError("x", "contains non-finite values")
        knots, inverse = np.unique(x, return_inverse=True)
        inverse = inverse.ravel()
        if knots.size > 1:
            # values closer than TIE_TOL of the range are ties: near-duplicate
            # knots make the penalty so ill-conditioned that the factorisation
            # breaks down well before the smoothing limit
            group = np.concatenate([[0], np.cumsum(np.diff(knots) > TIE_TOL * (knots[-1] - knots[0]))])
            if group[-1] + 1 < knots.size:
                first = np.flatnonzero(np.diff(group, prepend=-1))
                knots, inverse = knots[first], group[inverse]
        if knots.size < 4:
            raise DegenerateInputError(f"need at least 4 distinct x values, got {knots.size}")
        self.x = x
        self.knots = knots
        self.inverse = inverse
        self.m = m = knots.size
        self.scale = float(knots[-1] - knots[0])
        t = (knots - knots[0]) / self.scale
        t[-1] = 1.0
        self.t = t
        self.K = K = m + 2

        tau = np.concatenate([np.zeros(3), t, np.ones(3)])
        # column r of `comb` sums the basis functions with index = r mod 4;
        # at most one of them is active on any knot interval
        comb = np.zeros((K, 4))
        comb[np.arange(K), np.arange(K) % 4] = 1.0
        spl = BSpline(tau, comb, 3)
        d2 = spl.derivative(2)

        rows = np.arange(m)[:, None]
        self.j0 = np.minimum(np.arange(m), m - 2)
        cols = (self.j0[:, None] + np.arange(4)) % 4
        self.basis = np.ascontiguousarray(spl(t)[rows, cols])
        self.basis2 = np.ascontiguousarray(d2(t)[rows, cols])

        # roughness penalty: B'' is linear on each interval, so two-point
        # Gauss-Legendre quadrature is exact for the products
        h = np.diff(t)
        mid = 0.5 * (t[:-1] + t[1:])
        off = h / (2.0 * np.sqrt(3.0))
        irows = np.arange(m - 1)[:, None]
        icols = (np.arange(m - 1)[:, None] + np.arange(4)) % 4
        v1 = d2(mid - off)[irows, icols]
        v2 = d2(mid + off)[irows, icols]
        O = np.zeros((4, K))
        for q in range(4):
            for d in range(4 - q):
                vals = 0.5 * h * (v1[:, q] * v1[:, q + d] + v2[:, q] * v2[:, q + d])
                O[d] += np.bincount(np.arange(m - 1) + q, weights=vals, minlength=K)
        self.penalty = O
        self._penalty_size = float(np.sum(O[0]))

        self.lines = np.column_stack([np.ones(m), t])

    def aggregate(self, weights, y=None):
        """Knot weights and, if ``y`` given, weighted knot means."""
        W = np.bincount(self.inverse, weights=weights, minlength=self.m)
        if y is None:
            return W
        ybar = np.bincount(self.inverse, weights=weights * y, minlength=self.m) / W
        return W, ybar

    def gram(self, W):
        """Banded ``B' diag(W) B`` for basis values at the knots."""
        G = np.zeros((4, self.K))
        b = self.basis
        for q in range(4):
            for d in range(4 - q):
                G[d] += np.bincount(self.j0 + q, weights=W * b[:, q] * b[:, q + d], minlength=self.K)
        return G

    # lam_unit is lam expressed for knots rescaled to [0, 1]
    def _to_unit(self, lam):
        return lam / self.scale**3

    def _from_unit(self, lam_unit):
        return lam_unit * self.scale**3

    def _balance(self, G):
        """Penalty scale at which data and roughness terms are comparable."""
        return float(np.sum(G[0])) / self._penalty_size

    def _effective(self, G, lam):
        """Unit-scale penalty actually factorised and the shrink factor."""
        lam_unit = float(self._to_unit(lam))
        cap = MAX_BALANCE * self._balance(G)
        if lam_unit > cap:
            return cap, cap / lam_unit
        return lam_unit, 1.0

    def _line_moments(self, W):
        """``B' W X`` and ``(X' W X)^-1`` for the straight lines ``X``."""
        X = self.lines
        U = np.zeros((self.K, 2))
        for q in range(4):
            for k in range(2):
                U[:, k] += np.bincount(self.j0 + q, weights=W * X[:, k] * self.basis[:, q], minlength=self.K)
        return U, np.linalg.inv(X.T @ (W[:, None] * X))

    def trace(self, W, lam, G=None):
        """Smoother trace, split as 2 (straight lines) plus the rest.

        The penalty vanishes on straight lines, so for large ``lam`` the
        line directions of ``G + lam O`` carry rounding of order
        ``eps * lam``.  Projecting the lines out of ``G`` before taking the
        trace cancels that error instead of adding it to the result.
        """
        if lam == 0:
            return float(self.m)
        G = self.gram(W) if G is None else G
        lam_unit, shrink = self._effective(G, lam)
        U, C = self._line_moments(W)
        AU = np.column_stack([_kernels.band_solve(G, self.penalty, np.ascontiguousarray(u), lam_unit) for u in U.T])
        rest = _kernels.band_trace(G, self.penalty, lam_unit) - float(np.sum(C * (U.T @ AU)))
        return 2.0 + max(rest, 0.0) * shrink

    def smooth(self, W, ybar, lam):
        """Knot values and full-length second derivatives (original units)."""
        if lam == 0:
            cs = CubicSpline(self.t, ybar, bc_type="natural")
            g = np.array(ybar, dtype=float)
            second = cs(self.t, 2)
        else:
            # fit the weighted line exactly, then smooth what it leaves over
            G = self.gram(W)
            lam_unit, shrink = self._effective(G, lam)
            X = self.lines
            beta = np.linalg.solve(X.T @ (W[:, None] * X), X.T @ (W * ybar))
            line = X @ beta
            rhs = np.zeros(self.K)
            wr = W * (ybar - line)
            for q in range(4):
                rhs += np.bincount(self.j0 + q, weights=wr * self.basis[:, q], minlength=self.K)
            coef = shrink * _kernels.band_solve(G, self.penalty, rhs, lam_unit)
            idx = self.j0[:, None] + np.arange(4)
            c = coef[idx]
            g = line + np.sum(self.basis * c, axis=1)
            second = np.sum(self.basis2 * c, axis=1)
        second[0] = second[-1] = 0.0
        return g, second / self.scale**2

    def lambda_for_edf(self, W, target_edf):
        if not (2.0 < target_edf <= self.m):
            raise DomainError("target_edf", f"must lie in (2, {self.m}], got {target_edf}")
        if target_edf == self.m:
            return 0.0
        G = self.gram(W)
        # rho = 0 balances the sizes of the data and penalty matrices
        base = self._balance(G)

        def gap(rho):
            try:
                tr = self.trace(W, self._from_unit(base * np.exp(rho)), G)
            except FloatingPointError:
                # breakdown far into either limit
                tr = float(self.m) if rho < 0 else 2.0
            return tr - target_edf

        lo, hi = -5.0, 5.0
        while gap(lo) < 0.0:
            hi, lo = lo, lo - 5.0
            if lo < -200:
                raise DomainError("target_edf", "too close to the interpolation limit")
        while gap(hi) > 0.0:
            lo, hi = hi, hi + 5.0
            if hi > 200:
                raise DomainError("target_edf", "too close to the linear limit")
        rho = brentq(gap, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
        return float(self._from_unit(base * np.exp(rho)))

    def fit(self, y, weights, lam) -> SmootherFit:
        W, ybar = self.aggregate(weights, y)
        g, second = self.smooth(W, ybar, lam)
        edf = self.trace(W, lam)
        return SmootherFit(
            knots=self.knots, values=g, second_derivs=second, lam=float(lam), edf=float(edf), fitted=g[self.inverse]
        )


def _check_inputs(x, y, weights):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    weights = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if not (x.shape == y.shape == weights.shape) or x.ndim != 1:
        raise DomainError("x", "x, y and weights must be 1-d and of equal length")
    if x.size < 4:
        raise DegenerateInputError("need at least 4 observations")
    for name, arr in (("x", x), ("y", y), ("weights", weights)):
        if not np.all(np.isfinite(arr)):
            raise DomainError(name, "contains non-finite values")
    if np.any(weights <= 0):
        raise DomainError("weights", "must be positive")
    return x, y, weights


def fit_cubic_spline(x, y, weights=None, lam=0.0) -> SmootherFit:
    """Penalised least-squares natural cubic spline at fixed ``lam``."""
    x, y, weights = _check_inputs(x, y, weights)
    if not (lam >= 0 and np.isfinite(lam)):
        raise DomainError("lam", "must be a finite non-negative number")
    return KnotGrid(x).fit(y, weights, lam)


def edf_to_lambda(x, weights, target_edf) -> float:
    """Penalty giving smoother trace ``target_edf``.

    The trace falls strictly from the number of distinct ``x`` (at
    ``lam = 0``) towards 2 (as ``lam -> inf``), so the root is unique.
    """
    x = np.asarray(x, dtype=float)
    x, _, weights = _check_inputs(x, x, weights)
    grid = KnotGrid(x)
    return grid.lambda_for_edf(grid.aggregate(weights), float(target_edf))


def _locate(fit, x_new):
    x_new = np.asarray(x_new, dtype=float)
    if not np.all(np.isfinite(x_new)):
        raise DomainError("x_new", "contains non-finite values")
    t = fit.knots
    i = np.clip(np.searchsorted(t, x_new, side="right") - 1, 0, t.size - 2)
    return x_new, t, i


def _end_slopes(fit):
    t, g, s = fit.knots, fit.values, fit.second_derivs
    h0 = t[1] - t[0]
    h1 = t[-1] - t[-2]
    left = (g[1] - g[0]) / h0 - h0 * s[1] / 6.0
    right = (g[-1] - g[-2]) / h1 + h1 * s[-2] / 6.0
    return left, right


def predict_spline(fit: SmootherFit, x_new) -> np.ndarray:
    """Evaluate the natural spline; linear beyond the boundary knots."""
    x_new, t, i = _locate(fit, x_new)
    g, s = fit.values, fit.second_derivs
    h = t[i + 1] - t[i]
    a = x_new - t[i]
    b = t[i + 1] - x_new
    out = (a * g[i + 1] + b * g[i]) / h - a * b / 6.0 * ((1.0 + a / h) * s[i + 1] + (1.0 + b / h) * s[i])
    left, right = _end_slopes(fit)
    lo = x_new < t[0]
    hi = x_new > t[-1]
    out = np.where(lo, g[0] + (x_new - t[0]) * left, out)
    out = np.where(hi, g[-1] + (x_new - t[-1]) * right, out)
    return out


def spline_derivative(fit: SmootherFit, x_new) -> np.ndarray:
    """First derivative of the fitted spline."""
    x_new, t, i = _locate(fit, x_new)
    g, s = fit.values, fit.second_derivs
    h = t[i + 1] - t[i]
    a = x_new - t[i]
    b = t[i + 1] - x_new
    out = (g[i + 1] - g[i]) / h + s[i + 1] * (3 * a * a - h * h) / (6 * h) - s[i] * (3 * b * b - h * h) / (6 * h)
    left, right = _end_slopes(fit)
    out = np.where(x_new < t[0], left, out)
    return np.where(x_new > t[-1], right, out)


def roughness(fit: SmootherFit) -> float:
    """``integral f''(t)^2 dt``; f'' is piecewise linear between knots."""
    h = np.diff(fit.knots)
    s0 = fit.second_derivs[:-1]
    s1 = fit.second_derivs[1:]
    return float(np.sum(h * (s0 * s0 + s0 * s1 + s1 * s1) / 3.0))
