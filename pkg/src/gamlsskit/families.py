"""Two-parameter response distributions and link functions.

Parameterizations follow the mean-dispersion convention of the GAMLSS
software:

========  =========================================  ======================
family    density / definition                       moments
========  =========================================  ======================
NO        Normal(mu, sigma^2)                        E=mu, Var=sigma^2
LOGNO     log Y ~ Normal(mu, sigma^2)                median=exp(mu)
GA        shape 1/sigma^2, scale sigma^2 mu          E=mu, Var=sigma^2 mu^2
IG        inverse Gaussian, shape 1/sigma^2          E=mu, Var=sigma^2 mu^3
WEI       F(y) = 1 - exp(-(y/mu)^sigma)              mu scale, sigma shape
========  =========================================  ======================

The fitting engine consumes :func:`score_and_weight`, which returns the
score and the expected information of one distribution parameter on the
scale of its linear predictor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, FittingError

PARAM_NAMES = ("mu", "sigma")
WEIGHT_FLOOR = 1e-10
WEIGHT_CEIL = 1e10

_EULER_GAMMA = 0.57721566490153286061
_WEIBULL_SHAPE_INFO = (1.0 - _EULER_GAMMA) ** 2 + np.pi**2 / 6.0


# --------------------------------------------------------------------------
# Links
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Link:
    """A strictly monotone link ``eta = g(theta)``."""

    name: str
    forward: Callable
    inverse: Callable
    derivative: Callable  # g'(theta)
    domain: Callable  # theta values where g is defined
    image: Callable  # eta values where g^-1 is defined

    def __repr__(self):
        return f"Link({self.name!r})"


def _log_fwd(x):
    return np.log(x)


def _inv_fwd(x):
    return 1.0 / x


LINKS = {
    "identity": Link(
        "identity",
        forward=lambda x: np.asarray(x, dtype=float) * 1.0,
        inverse=lambda eta: np.asarray(eta, dtype=float) * 1.0,
        derivative=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        domain=lambda x: np.isfinite(x),
        image=lambda eta: np.isfinite(eta),
    ),
    "log": Link(
        "log",
        forward=_log_fwd,
        inverse=np.exp,
        derivative=lambda x: 1.0 / np.asarray(x, dtype=float),
        domain=lambda x: np.asarray(x) > 0,
        image=lambda eta: np.isfinite(eta),
    ),
    "inverse": Link(
        "inverse",
        forward=_inv_fwd,
        inverse=_inv_fwd,
        derivative=lambda x: -1.0 / np.asarray(x, dtype=float) ** 2,
        domain=lambda x: (np.asarray(x) != 0) & np.isfinite(x),
        image=lambda eta: (np.asarray(eta) != 0) & np.isfinite(eta),
    ),
}


def get_link(link) -> Link:
    if isinstance(link, Link):
        return link
    try:
        return LINKS[link]
    except KeyError:
        raise DomainError("link", f"unknown link {link!r}; choose from {sorted(LINKS)}") from None


def link_apply(link, x):
    lk = get_link(link)
    x = np.asarray(x, dtype=float)
    if not np.all(lk.domain(x)):
        raise DomainError("x", f"outside the domain of the {lk.name} link")
    out = lk.forward(x)
    return float(out) if out.ndim == 0 else out


def link_inverse(link, eta):
    lk = get_link(link)
    eta = np.asarray(eta, dtype=float)
    if not np.all(lk.image(eta)):
        raise DomainError("eta", f"outside the range of the {lk.name} link")
    out = lk.inverse(eta)
    return float(out) if out.ndim == 0 else out


def link_derivative(link, x):
    """``g'(x)``, i.e. d eta / d theta."""
    lk = get_link(link)
    x = np.asarray(x, dtype=float)
    if not np.all(lk.domain(x)):
        raise DomainError("x", f"outside the domain of the {lk.name} link")
    out = lk.derivative(x)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Families
# --------------------------------------------------------------------------


class Family:
    """Base class; subclasses implement the per-family formulas."""

    name = ""
    default_links = {"mu": "identity", "sigma": "log"}
    mu_positive = True
    y_positive = True
    n_params = 2
    param_names = PARAM_NAMES

    # ---- validation -------------------------------------------------
    def check(self, y, mu, sigma):
        y, mu, sigma = np.broadcast_arrays(
            np.asarray(y, dtype=float), np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
        )
        if not np.all(np.isfinite(y)) or (self.y_positive and np.any(y <= 0)):
            raise DomainError("y", f"outside the support of {self.name}")
        if not np.all(np.isfinite(mu)) or (self.mu_positive and np.any(mu <= 0)):
            raise DomainError("mu", f"invalid {self.name} location parameter")
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise DomainError("sigma", f"invalid {self.name} scale parameter")
        return y, mu, sigma

    def valid_params(self, mu, sigma) -> bool:
        mu = np.asarray(mu)
        sigma = np.asarray(sigma)
        ok = np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma)) and np.all(sigma > 0)
        if self.mu_positive:
            ok = ok and np.all(mu > 0)
        return bool(ok)

    # ---- to be provided by subclasses -------------------------------
    def logpdf(self, y, mu, sigma):
        raise NotImplementedError

    def cdf(self, y, mu, sigma):
        raise NotImplementedError

    def dldm(self, y, mu, sigma):
        raise NotImplementedError

    def dlds(self, y, mu, sigma):
        raise NotImplementedError

    def info_mu(self, mu, sigma):
        """Expected information for mu; ``None`` when not closed-form."""
        return None

    def info_sigma(self, mu, sigma):
        return None

    def mean(self, mu, sigma):
        return np.asarray(mu, dtype=float)

    def variance(self, mu, sigma):
        raise NotImplementedError

    def rvs(self, mu, sigma, rng):
        raise NotImplementedError

    def initial_mu(self, y):
        y = np.asarray(y, dtype=float)
        return (y + y.mean()) / 2.0

    def initial_sigma(self, y):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class Normal(Family):
    name = "NO"
    default_links = {"mu": "identity", "sigma": "log"}
    mu_positive = False
    y_positive = False

    def logpdf(self, y, mu, sigma):
        z = (y - mu) / sigma
        return -0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5 * z * z

    def cdf(self, y, mu, sigma):
        return special.ndtr((y - mu) / sigma)

    def dldm(self, y, mu, sigma):
        return (y - mu) / sigma**2

    def dlds(self, y, mu, sigma):
        return ((y - mu) ** 2 - sigma**2) / sigma**3

    def info_mu(self, mu, sigma):
        return 1.0 / sigma**2

    def info_sigma(self, mu, sigma):
        return 2.0 / sigma**2

    def variance(self, mu, sigma):
        return sigma**2 + 0.0 * mu

    def rvs(self, mu, sigma, rng):
        return rng.normal(mu, sigma)

    def initial_sigma(self, y):
        return np.std(y)


class LogNormal(Family):
    name = "LOGNO"
    default_links = {"mu": "identity", "sigma": "log"}
    mu_positive = False

    def logpdf(self, y, mu, sigma):
        ly = np.log(y)
        z = (ly - mu) / sigma
        return -0.5 * np.log(2 * np.pi) - np.log(sigma) - ly - 0.5 * z * z

    def cdf(self, y, mu, sigma):
        return special.ndtr((np.log(y) - mu) / sigma)

    def dldm(self, y, mu, sigma):
        return (np.log(y) - mu) / sigma**2

    def dlds(self, y, mu, sigma):
        return ((np.log(y) - mu) ** 2 - sigma**2) / sigma**3

    def info_mu(self, mu, sigma):
        return 1.0 / sigma**2

    def info_sigma(self, mu, sigma):
        return 2.0 / sigma**2

    def mean(self, mu, sigma):
        return np.exp(mu + 0.5 * sigma**2)

    def variance(self, mu, sigma):
        s2 = sigma**2
        return (np.exp(s2) - 1.0) * np.exp(2 * mu + s2)

    def rvs(self, mu, sigma, rng):
        return np.exp(rng.normal(mu, sigma))

    def initial_mu(self, y):
        ly = np.log(np.asarray(y, dtype=float))
        return (ly + ly.mean()) / 2.0

    def initial_sigma(self, y):
        return np.std(np.log(y))


class Gamma(Family):
    name = "GA"
    default_links = {"mu": "log", "sigma": "log"}

    def logpdf(self, y, mu, sigma):
        a = 1.0 / sigma**2
        return (a - 1.0) * np.log(y) - y / (sigma**2 * mu) - a * np.log(sigma**2 * mu) - special.gammaln(a)

    def cdf(self, y, mu, sigma):
        a = 1.0 / sigma**2
        return special.gammainc(a, y / (sigma**2 * mu))

    def dldm(self, y, mu, sigma):
        return (y - mu) / (sigma**2 * mu**2)

    def dlds(self, y, mu, sigma):
        a = 1.0 / sigma**2
        dlda = np.log(y) - y / mu - np.log(mu) + np.log(a) + 1.0 - special.digamma(a)
        return dlda * (-2.0 / sigma**3)

    def info_mu(self, mu, sigma):
        return 1.0 / (sigma**2 * mu**2)

    def info_sigma(self, mu, sigma):
        a = 1.0 / sigma**2
        return (special.polygamma(1, a) - sigma**2) * 4.0 / sigma**6 + 0.0 * mu

    def variance(self, mu, sigma):
        return sigma**2 * mu**2

    def rvs(self, mu, sigma, rng):
        return rng.gamma(shape=1.0 / sigma**2, scale=sigma**2 * mu)

    def initial_sigma(self, y):
        return np.std(y) / np.mean(y)


class InverseGaussian(Family):
    name = "IG"
    default_links = {"mu": "log", "sigma": "log"}

    def logpdf(self, y, mu, sigma):
        return -0.5 * np.log(2 * np.pi * sigma**2 * y**3) - (y - mu) ** 2 / (2 * mu**2 * sigma**2 * y)

    def cdf(self, y, mu, sigma):
        s = np.sqrt(1.0 / (sigma**2 * y))
        first = special.ndtr(s * (y / mu - 1.0))
        second = np.exp(2.0 / (mu * sigma**2) + special.log_ndtr(-s * (y / mu + 1.0)))
        return np.clip(first + second, 0.0, 1.0)

    def dldm(self, y, mu, sigma):
        return (y - mu) / (sigma**2 * mu**3)

    def dlds(self, y, mu, sigma):
        return -1.0 / sigma + (y - mu) ** 2 / (mu**2 * sigma**3 * y)

    def info_mu(self, mu, sigma):
        return 1.0 / (sigma**2 * mu**3)

    def info_sigma(self, mu, sigma):
        return 2.0 / sigma**2 + 0.0 * mu

    def variance(self, mu, sigma):
        return sigma**2 * mu**3

    def rvs(self, mu, sigma, rng):
        return rng.wald(mean=mu, scale=1.0 / sigma**2)

    def initial_sigma(self, y):
        return np.sqrt(np.var(y) / np.mean(y) ** 3)


class Weibull(Family):
    name = "WEI"
    default_links = {"mu": "log", "sigma": "log"}

    def logpdf(self, y, mu, sigma):
        r = y / mu
        return np.log(sigma) - np.log(mu) + (sigma - 1.0) * np.log(r) - r**sigma

    def cdf(self, y, mu, sigma):
        return -np.expm1(-((y / mu) ** sigma))

    def dldm(self, y, mu, sigma):
        return (sigma / mu) * ((y / mu) ** sigma - 1.0)

    def dlds(self, y, mu, sigma):
        lr = np.log(y / mu)
        return 1.0 / sigma + lr - (y / mu) ** sigma * lr

    def info_mu(self, mu, sigma):
        return sigma**2 / mu**2

    def info_sigma(self, mu, sigma):
        return _WEIBULL_SHAPE_INFO / sigma**2 + 0.0 * mu

    def mean(self, mu, sigma):
        return mu * special.gamma(1.0 + 1.0 / sigma)

    def variance(self, mu, sigma):
        return mu**2 * (special.gamma(1.0 + 2.0 / sigma) - special.gamma(1.0 + 1.0 / sigma) ** 2)

    def rvs(self, mu, sigma, rng):
        return mu * rng.weibull(sigma)

    def initial_sigma(self, y):
        cv = np.std(y) / np.mean(y)
        return 1.2 / cv


FAMILIES = {f.name: f for f in (Normal(), LogNormal(), Gamma(), InverseGaussian(), Weibull())}


def get_family(family) -> Family:
    if isinstance(family, Family):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise DomainError("family", f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None


def _scalarize(out):
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def log_density(family, y, mu, sigma):
    """``log f(y | mu, sigma)``; raises :class:`DomainError` on invalid input."""
    fam = get_family(family)
    y, mu, sigma = fam.check(y, mu, sigma)
    return _scalarize(fam.logpdf(y, mu, sigma))


def cdf(family, y, mu, sigma):
    fam = get_family(family)
    y, mu, sigma = fam.check(y, mu, sigma)
    return _scalarize(fam.cdf(y, mu, sigma))


def score_and_weight(family, y, params, which, link):
    """Working score and iterative weight of one parameter on the eta scale.

    Parameters
    ----------
    family : str or Family
    y : array
    params : mapping with ``"mu"`` and ``"sigma"`` arrays
    which : ``"mu"`` or ``"sigma"``
    link : link name or :class:`Link` used for ``which``

    Returns
    -------
    u, w : arrays
        ``u = dl/deta`` and ``w = E[-d2l/deta2]`` (squared score when the
        family has no closed-form information), clamped to [1e-10, 1e10].
    """
    fam = get_family(family)
    lk = get_link(link)
    if which not in PARAM_NAMES:
        raise DomainError("which", f"expected one of {PARAM_NAMES}")
    y, mu, sigma = fam.check(y, params["mu"], params["sigma"])
    theta = mu if which == "mu" else sigma
    if not np.all(lk.domain(theta)):
        raise DomainError("link", f"{lk.name} link undefined for current {which} values")
    dtheta_deta = 1.0 / lk.derivative(theta)
    with np.errstate(all="ignore"):
        if which == "mu":
            dl = fam.dldm(y, mu, sigma)
            info = fam.info_mu(mu, sigma)
        else:
            dl = fam.dlds(y, mu, sigma)
            info = fam.info_sigma(mu, sigma)
        u = dl * dtheta_deta
        if info is None:
            w = u * u
        else:
            w = np.broadcast_to(info, y.shape) * dtheta_deta**2
    bad = ~(np.isfinite(u) & np.isfinite(w))
    if np.any(bad):
        raise FittingError(f"non-finite score for {which}", row=int(np.flatnonzero(bad)[0]))
    w = np.clip(w, WEIGHT_FLOOR, WEIGHT_CEIL)
    return np.asarray(u, dtype=float), np.asarray(w, dtype=float)
