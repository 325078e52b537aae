"""Comparison models: least squares with diagnostics and the gamma GLM.

* :func:`ols_fit` -- least squares by QR, Gaussian AIC/BIC counting the
  error variance as a parameter, classical and HC3 covariances.
* :func:`box_cox_profile` -- profile log-likelihood of the Box-Cox power.
* :func:`jarque_bera`, :func:`breusch_pagan` -- specification tests.
* :func:`glm_fit_gamma_log` -- gamma GLM with log link by IRLS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special, stats
from scipy.optimize import brentq

from .engine import check_rank
from .errors import ConvergenceError, DomainError, InsufficientDataError, LeverageError

__all__ = [
    "OlsFit",
    "GlmFit",
    "BoxCoxResult",
    "ols_fit",
    "hc3_se",
    "box_cox_transform",
    "box_cox_profile",
    "jarque_bera",
    "breusch_pagan",
    "glm_fit_gamma_log",
    "DEFAULT_BOX_COX_GRID",
]

LEVERAGE_TOL = 1e-12
DEFAULT_BOX_COX_GRID = np.linspace(-2.0, 2.0, 81)


def _prepare(X, y, names):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DomainError("y", f"expected length {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DomainError("X", "non-finite values in design or response")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if n <= p:
        raise InsufficientDataError(f"need more rows ({n}) than columns ({p})")
    check_rank(X, names)
    return X, y, names


def _conditioned(X):
    """Well-conditioned reparametrisation ``X = Z A^-1``, so ``beta = A b``.

    When the design has one constant (intercept) column the other columns
    are centred; every column is then scaled to unit norm.  Raw coordinates
    such as UTM metres are nearly collinear with the intercept, and solving
    in ``Z`` avoids the digits that loss would cost.
    """
    n, p = X.shape
    A = np.eye(p)
    Z = X.copy()
    const = np.flatnonzero(np.all(X == X[0], axis=0) & (X[0] != 0))
    if const.size == 1:
        k = int(const[0])
        m = X.mean(axis=0)
        m[k] = 0.0
        Z = X - m
        # X = Z (I + e_k m' / c) and (e_k m')^2 = 0, so the inverse is exact
        A = A - np.outer(A[k], m) / X[0, k]
    scale = np.sqrt(np.sum(Z * Z, axis=0))
    return Z / scale, A / scale


@dataclass(frozen=True)
class OlsFit:
    names: tuple
    beta: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    sigma2_hat: float
    rss: float
    r2: float
    adj_r2: float
    loglik: float
    aic: float
    bic: float
    hat_diagonals: np.ndarray
    vcov_classical: np.ndarray
    vcov_hc3: np.ndarray | None
    n: int
    p: int

    @property
    def se(self):
        return np.sqrt(np.diag(self.vcov_classical))

    @property
    def se_hc3(self):
        return None if self.vcov_hc3 is None else np.sqrt(np.diag(self.vcov_hc3))

    @property
    def n_params(self) -> int:
        """Coefficients plus the error variance."""
        return self.p + 1


def ols_fit(X, y, names=None) -> OlsFit:
    """Ordinary least squares through a thin QR decomposition.

    R^2 is centred (the design is assumed to contain an intercept).
    """
    X, y, names = _prepare(X, y, names)
    n, p = X.shape
    Z, A = _conditioned(X)
    q, r = linalg.qr(Z, mode="economic")
    beta = A @ linalg.solve_triangular(r, q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    s2 = rss / (n - p)
    rinv = A @ linalg.solve_triangular(r, np.eye(p))
    xtx_inv = rinv @ rinv.T
    h = np.sum(q * q, axis=1)
    sig_ml = max(rss / n, np.finfo(float).tiny)
    loglik = -0.5 * n * (math.log(2 * math.pi * sig_ml) + 1.0)
    k = p + 1
    vcov_hc3 = _hc3(xtx_inv, X, resid, h) if np.all(h < 1.0 - LEVERAGE_TOL) else None
    return OlsFit(
        names=names,
        beta=beta,
        residuals=resid,
        fitted=fitted,
        sigma2_hat=s2,
        rss=rss,
        r2=r2,
        adj_r2=adj,
        loglik=loglik,
        aic=-2 * loglik + 2 * k,
        bic=-2 * loglik + math.log(n) * k,
        hat_diagonals=h,
        vcov_classical=s2 * xtx_inv,
        vcov_hc3=vcov_hc3,
        n=n,
        p=p,
    )


def _hc3(xtx_inv, X, resid, h):
    omega = (resid / (1.0 - h)) ** 2
    meat = X.T @ (X * omega[:, None])
    return xtx_inv @ meat @ xtx_inv


def hc3_se(fit: OlsFit, X) -> np.ndarray:
    """HC3 standard errors ``sqrt(diag((X'X)^-1 X' diag(e^2/(1-h)^2) X (X'X)^-1))``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    h = fit.hat_diagonals
    bad = np.flatnonzero(h >= 1.0 - LEVERAGE_TOL)
    if bad.size:
        raise LeverageError(f"observation {int(bad[0])} has leverage {h[bad[0]]:.15g}")
    xtx_inv = linalg.inv(X.T @ X)
    return np.sqrt(np.diag(_hc3(xtx_inv, X, fit.residuals, h)))


# --------------------------------------------------------------------------
# Box-Cox
# --------------------------------------------------------------------------


def box_cox_transform(y, lam: float):
    """``(y^lam - 1) / lam``, or ``log y`` at ``lam = 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DomainError("y", "Box-Cox needs finite positive responses")
    ly = np.log(y)
    if abs(lam) < 1e-12:
        return ly
    return np.expm1(lam * ly) / lam


@dataclass(frozen=True)
class BoxCoxResult:
    lambda_hat: float
    grid: np.ndarray
    profile: np.ndarray
    loglik_hat: float


def _profile(y, X, q, lam, sum_log_y):
    z = box_cox_transform(y, lam)
    resid = z - q @ (q.T @ z)
    rss = float(resid @ resid)
    n = y.size
    return -0.5 * n * (math.log(2 * math.pi * rss / n) + 1.0) + (lam - 1.0) * sum_log_y


def box_cox_profile(y, X, lambda_grid=None, tol=1e-4) -> BoxCoxResult:
    """Maximise the Box-Cox profile log-likelihood over ``lam``.

    For each ``lam`` the transformed response is regressed on ``X``; the
    profile is the Gaussian log-likelihood at the ML variance plus the
    Jacobian ``(lam - 1) * sum(log y)``.  The grid maximiser is refined by
    golden-section search on its neighbouring grid cells.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DomainError("y", "Box-Cox needs finite positive responses")
    grid = DEFAULT_BOX_COX_GRID if lambda_grid is None else np.sort(np.asarray(lambda_grid, dtype=float))
    if grid.size < 3 or grid[0] > -2.0 or grid[-1] < 2.0:
        raise DomainError("lambda_grid", "must span [-2, 2] with at least 3 points")
    X, y, _ = _prepare(X, y, None)
    q, _ = linalg.qr(X, mode="economic")
    sly = float(np.sum(np.log(y)))

    def prof(lam):
        return _profile(y, X, q, lam, sly)

    values = np.array([prof(v) for v in grid])
    k = int(np.argmax(values))
    if k in (0, grid.size - 1):
        return BoxCoxResult(float(grid[k]), grid, values, float(values[k]))
    a, b = float(grid[k - 1]), float(grid[k + 1])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = prof(c), prof(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = prof(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = prof(d)
    lam_hat = 0.5 * (a + b)
    return BoxCoxResult(lam_hat, grid, values, prof(lam_hat))


# --------------------------------------------------------------------------
# Specification tests
# --------------------------------------------------------------------------


def jarque_bera(residuals):
    """``n/6 (S^2 + (K - 3)^2 / 4)`` with moment skewness and kurtosis."""
    e = np.asarray(residuals, dtype=float)
    n = e.size
    if n < 8:
        raise InsufficientDataError(f"Jarque-Bera needs at least 8 residuals, got {n}")
    d = e - e.mean()
    m2 = float(np.mean(d**2))
    if m2 == 0:
        raise DomainError("residuals", "zero variance")
    s = float(np.mean(d**3)) / m2**1.5
    k = float(np.mean(d**4)) / m2**2
    jb = n / 6.0 * (s * s + (k - 3.0) ** 2 / 4.0)
    return float(jb), float(stats.chi2.sf(jb, 2))


def breusch_pagan(X, residuals):
    """``n R^2`` of squared residuals on ``X``; chi-square with ``p - 1`` df.

    ``X`` must contain an intercept column.
    """
    e = np.asarray(residuals, dtype=float)
    X, e2, _ = _prepare(X, e**2, None)
    n, p = X.shape
    if p < 2:
        raise DomainError("X", "needs an intercept and at least one regressor")
    tss = float(np.sum((e2 - e2.mean()) ** 2))
    if tss <= 1e-30 * max(1.0, float(np.sum(e2**2))):
        return 0.0, 1.0
    q, _ = linalg.qr(X, mode="economic")
    res = e2 - q @ (q.T @ e2)
    r2 = 1.0 - float(res @ res) / tss
    stat = n * max(r2, 0.0)
    return float(stat), float(stats.chi2.sf(stat, p - 1))


# --------------------------------------------------------------------------
# Gamma GLM
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GlmFit:
    names: tuple
    beta: np.ndarray
    eta: np.ndarray
    mu_hat: np.ndarray
    dispersion: float
    deviance: float
    loglik: float
    sigma_ml: float
    aic: float
    bic: float
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    iterations: int
    n: int

    @property
    def n_params(self) -> int:
        return self.beta.size + 1


def _gamma_deviance(y, mu):
    return 2.0 * float(np.sum(-np.log(y / mu) + (y - mu) / mu))


def _gamma_loglik(y, mu, sigma):
    a = 1.0 / sigma**2
    return float(np.sum(a * np.log(a * y / mu) - a * y / mu - np.log(y) - special.gammaln(a)))


def glm_fit_gamma_log(X, y, names=None, max_iter: int = 100, tol: float = 1e-10) -> GlmFit:
    """Gamma GLM with log link by iteratively reweighted least squares.

    With the log link the working weights are constant, so each step is an
    ordinary least-squares fit of ``z = eta + (y - mu) / mu``.  Iteration
    stops when ``|dev - dev_old| < tol * (|dev| + 0.1)`` and no linear
    predictor moved by more than ``tol``; scoring converges only linearly,
    so a small deviance change alone can stop it early.

    The dispersion used for the Wald statistics is the Pearson estimate.
    AIC and BIC use the likelihood at the maximum-likelihood dispersion and
    count it as a parameter.
    """
    X, y, names = _prepare(X, y, names)
    if np.any(y <= 0):
        raise DomainError("y", "gamma responses must be positive")
    n, p = X.shape
    Z, A = _conditioned(X)
    q, r = linalg.qr(Z, mode="economic")
    eta = np.log(y)
    mu = y.copy()
    dev_old = math.inf
    for it in range(1, max_iter + 1):
        z = eta + (y - mu) / mu
        beta = A @ linalg.solve_triangular(r, q.T @ z)
        eta_old, eta = eta, X @ beta
        mu = np.exp(eta)
        dev = _gamma_deviance(y, mu)
        if not math.isfinite(dev):
            raise ConvergenceError(f"deviance became non-finite at iteration {it}")
        if abs(dev - dev_old) < tol * (abs(dev) + 0.1) and np.max(np.abs(eta - eta_old)) < tol:
            break
        dev_old = dev
    else:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")
    pearson = float(np.sum(((y - mu) / mu) ** 2)) / (n - p)
    rinv = A @ linalg.solve_triangular(r, np.eye(p))
    se = np.sqrt(pearson * np.sum(rinv * rinv, axis=1))
    zst = beta / se
    pv = 2.0 * stats.norm.sf(np.abs(zst))
    # ML shape a solves log(a) - digamma(a) = dev / (2n)
    target = dev / (2.0 * n)
    if target <= 0:
        raise DomainError("y", "response is fitted exactly; dispersion is zero")
    shape = brentq(lambda a: math.log(a) - special.digamma(a) - target, 1e-8, 1e12, xtol=1e-14, rtol=1e-15)
    sigma_ml = 1.0 / math.sqrt(shape)
    ll = _gamma_loglik(y, mu, sigma_ml)
    k = p + 1
    return GlmFit(
        names=names,
        beta=beta,
        eta=eta,
        mu_hat=mu,
        dispersion=pearson,
        deviance=dev,
        loglik=ll,
        sigma_ml=sigma_ml,
        aic=-2 * ll + 2 * k,
        bic=-2 * ll + math.log(n) * k,
        se=se,
        z=zst,
        p=pv,
        iterations=it,
        n=n,
    )
