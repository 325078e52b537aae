"""Model-selection criteria and residual diagnostics.

Criteria are built on the global deviance ``GD = -2 log L``:
``GAIC(k) = GD + k * df`` with ``k = 2`` (AIC) and ``k = log n`` (BIC).
Residuals are normal quantile residuals ``r = Phi^-1(F(y | fitted))``;
for continuous families they are deterministic.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .data import CSV_FORMAT_VERSION, Dataset, column_values
from .engine import FittedModel, ModelSpec, Submodel, fit, predict
from .errors import DomainError, InsufficientDataError, NestingError
from .families import get_family

REPORT_FORMAT_VERSION = 1
U_CLAMP = 1e-12
BAND_Z = 1.96

__all__ = [
    "CriterionReport",
    "LRTest",
    "ResidualSet",
    "WormPlot",
    "WormGroup",
    "DiagnosticsReport",
    "CriterionIssue",
    "gaic",
    "criteria",
    "lr_test",
    "quantile_residuals",
    "worm_plot_data",
    "grouped_worm_plots",
    "pseudo_r2_corr",
    "pseudo_r2_mcfadden",
    "pseudo_r2_coxsnell",
    "check_criteria",
    "null_model",
    "diagnose",
]


# --------------------------------------------------------------------------
# Criteria
# --------------------------------------------------------------------------


def gaic(gd: float, df: float, penalty: float) -> float:
    """Generalised AIC ``gd + penalty * df``."""
    if df < 0:
        raise DomainError("df", "must be non-negative")
    if penalty < 0:
        raise DomainError("penalty", "must be non-negative")
    return float(gd) + float(penalty) * float(df)


@dataclass(frozen=True)
class CriterionReport:
    gd: float
    df_total: float
    n: int
    aic: float
    bic: float
    gaic_custom: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "gd": self.gd,
            "df_total": self.df_total,
            "n": self.n,
            "aic": self.aic,
            "bic": self.bic,
            "gaic": {repr(float(k)): v for k, v in self.gaic_custom.items()},
        }


def criteria(gd: float, df: float, n: int, penalties=()) -> CriterionReport:
    if n < 1:
        raise DomainError("n", "must be positive")
    return CriterionReport(
        gd=float(gd),
        df_total=float(df),
        n=int(n),
        aic=gaic(gd, df, 2.0),
        bic=gaic(gd, df, math.log(n)),
        gaic_custom={float(k): gaic(gd, df, k) for k in penalties},
    )


@dataclass(frozen=True)
class LRTest:
    statistic: float
    df: float
    p: float


def lr_test(gd0: float, gd1: float, df0: float, df1: float) -> LRTest:
    """Likelihood-ratio test of model 0 nested in model 1.

    The statistic is ``gd0 - gd1``; the p-value uses ``max(statistic, 0)``
    against chi-square with ``df1 - df0`` degrees of freedom.
    """
    d = float(df1) - float(df0)
    if d <= 0:
        raise NestingError(f"model 1 must have more df than model 0 (got df0={df0}, df1={df1})")
    lam = float(gd0) - float(gd1)
    p = float(stats.chi2.sf(max(lam, 0.0), d))
    return LRTest(lam, d, p)


@dataclass(frozen=True)
class CriterionIssue:
    name: str
    message: str
    suggestion: str = ""


def check_criteria(rows, tol=None):
    """Flag rows of reported (GD, AIC, BIC) that cannot all be right.

    Parameters
    ----------
    rows : iterable of mappings with ``name``, ``gd``, ``aic``, ``bic``,
        ``n`` and optionally ``df``.
    tol : float, optional
        Allowed disagreement between the df implied by AIC and by BIC.
        Defaults to the slack from rounding the three values to integers,
        ``0.5 + 1 / log(n)`` plus a small margin.

    Returns
    -------
    list of CriterionIssue
        Empty when every row is self-consistent.
    """
    issues = []
    for row in rows:
        name = str(row.get("name", "?"))
        gd, aic, bic, n = float(row["gd"]), float(row["aic"]), float(row["bic"]), int(row["n"])
        logn = math.log(n)
        slack = (0.5 + 1.0 / logn + 0.05) if tol is None else float(tol)
        df_aic = (aic - gd) / 2.0
        df_bic = (bic - gd) / logn
        if aic < gd:
            sugg = ""
            s_df_aic = (gd - aic) / 2.0
            s_df_bic = (bic - aic) / logn
            if abs(s_df_aic - s_df_bic) <= slack:
                sugg = (
                    f"swapping GD and AIC gives GD={aic:g}, AIC={gd:g}: df={s_df_aic:g} "
                    f"and BIC={aic + logn * s_df_aic:.1f}, consistent with the reported {bic:g}"
                )
            issues.append(CriterionIssue(name, f"AIC {aic:g} is below GD {gd:g}, impossible since AIC = GD + 2 df", sugg))
            continue
        if abs(df_aic - df_bic) > slack:
            issues.append(
                CriterionIssue(name, f"df implied by AIC ({df_aic:g}) and by BIC ({df_bic:.2f}) disagree")
            )
        if "df" in row and row["df"] is not None and abs(float(row["df"]) - df_aic) > 0.5 + 1e-9:
            issues.append(CriterionIssue(name, f"stated df {row['df']} differs from AIC-implied df {df_aic:g}"))
    return issues


# --------------------------------------------------------------------------
# Quantile residuals and worm plots
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualSet:
    r: np.ndarray
    u: np.ndarray
    randomized: bool = False
    seed: int | None = None
    n_clamped: int = 0


def residuals_from_u(u, seed=None, randomized=False) -> ResidualSet:
    u = np.asarray(u, dtype=float)
    clamped = (u < U_CLAMP) | (u > 1.0 - U_CLAMP)
    u = np.clip(u, U_CLAMP, 1.0 - U_CLAMP)
    r = special.ndtri(u)
    return ResidualSet(r, u, randomized, seed if randomized else None, int(np.sum(clamped)))


def quantile_residuals(fm: FittedModel, data: Dataset, seed: int | None = None) -> ResidualSet:
    """Normal quantile residuals of ``fm`` on ``data``.

    All shipped families are continuous, so ``u = F(y)`` exactly and no
    randomisation takes place; ``seed`` is accepted for interface
    stability and not stored.  Probabilities within 1e-12 of 0 or 1 are
    clamped and counted in ``n_clamped``.
    """
    family = get_family(fm.spec.family)
    y = column_values(data, fm.spec.response)
    mu = predict(fm, data, "mu")
    sigma = predict(fm, data, "sigma")
    y, mu, sigma = family.check(y, mu, sigma)
    return residuals_from_u(family.cdf(y, mu, sigma))


@dataclass(frozen=True)
class WormPlot:
    z: np.ndarray
    deviation: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n: int

    def rows(self):
        return list(zip(self.z, self.deviation, self.lower, self.upper))

    @property
    def outside(self) -> int:
        return int(np.sum((self.deviation < self.lower) | (self.deviation > self.upper)))


def worm_plot_data(rs, n_points: int | None = None) -> WormPlot:
    """Detrended normal QQ coordinates with pointwise 95% bands.

    Parameters
    ----------
    rs : ResidualSet or array of residuals
    n_points : int, optional
        Keep this many evenly spaced order statistics (all by default).

    Notes
    -----
    With ``p_i = (i - 0.5) / n`` and ``z_i = Phi^-1(p_i)`` the deviation is
    ``r_(i) - z_i`` and the band is ``+-1.96 sqrt(p_i (1 - p_i) / n) / phi(z_i)``.
    """
    r = np.sort(np.asarray(rs.r if isinstance(rs, ResidualSet) else rs, dtype=float))
    n = r.size
    if n < 10:
        raise InsufficientDataError(f"worm plot needs at least 10 residuals, got {n}")
    p = (np.arange(1, n + 1) - 0.5) / n
    z = special.ndtri(p)
    half = BAND_Z * np.sqrt(p * (1 - p) / n) / stats.norm.pdf(z)
    dev = r - z
    if n_points is not None and n_points < n:
        if n_points < 2:
            raise DomainError("n_points", "must be at least 2")
        idx = np.unique(np.round(np.linspace(0, n - 1, n_points)).astype(int))
        z, dev, half = z[idx], dev[idx], half[idx]
    return WormPlot(z, dev, -half, half, n)


@dataclass(frozen=True)
class WormGroup:
    lower: float
    upper: float
    plot: WormPlot


def grouped_worm_plots(rs, by, bins: int = 4):
    """One worm plot per quantile bin of the covariate ``by``.

    Bin edges are the ``k / bins`` sample quantiles; a value equal to an
    inner edge falls in the lower bin.
    """
    r = np.asarray(rs.r if isinstance(rs, ResidualSet) else rs, dtype=float)
    by = np.asarray(by, dtype=float)
    if by.shape != r.shape:
        raise DomainError("by", "must have one value per residual")
    if bins < 1:
        raise DomainError("bins", "must be at least 1")
    edges = np.quantile(by, np.linspace(0.0, 1.0, bins + 1))
    which = np.searchsorted(edges[1:-1], by, side="left")
    groups = []
    for k in range(bins):
        sel = which == k
        groups.append(WormGroup(float(edges[k]), float(edges[k + 1]), worm_plot_data(r[sel])))
    return groups


# --------------------------------------------------------------------------
# Pseudo R^2
# --------------------------------------------------------------------------


def pseudo_r2_corr(y, yhat) -> float:
    """Squared Pearson correlation of responses and fitted values."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size < 2:
        raise DomainError("yhat", "must match y and have at least two values")
    yc = y - y.mean()
    hc = yhat - yhat.mean()
    syy = float(yc @ yc)
    shh = float(hc @ hc)
    if syy == 0.0 or shh == 0.0:
        raise DomainError("yhat" if shh == 0.0 else "y", "zero variance; correlation undefined")
    r2 = float(yc @ hc) ** 2 / (syy * shh)
    return min(max(r2, 0.0), 1.0)


def pseudo_r2_mcfadden(loglik_fit: float, loglik_null: float) -> float:
    if loglik_null == 0:
        raise DomainError("loglik_null", "must be non-zero")
    return 1.0 - float(loglik_fit) / float(loglik_null)


def pseudo_r2_coxsnell(loglik_fit: float, loglik_null: float, n: int) -> float:
    if n <= 0:
        raise DomainError("n", "must be positive")
    return 1.0 - math.exp(2.0 * (float(loglik_null) - float(loglik_fit)) / n)


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------


def null_model(fm: FittedModel, data: Dataset) -> FittedModel:
    """Intercept-only fit of the same family and links."""
    spec = fm.spec
    null = ModelSpec(spec.response, spec.family, Submodel(spec.mu.link), Submodel(spec.sigma.link))
    return fit(null, data)


@dataclass(frozen=True)
class DiagnosticsReport:
    criteria: CriterionReport
    residuals: ResidualSet
    worm: WormPlot
    pseudo_r2: dict
    groups: tuple = ()
    group_variable: str | None = None
    fitted_mean: np.ndarray | None = None

    def to_dict(self):
        r = self.residuals.r
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "kind": "diagnostics",
            "criteria": self.criteria.to_dict(),
            "pseudo_r2": dict(self.pseudo_r2),
            "residuals": {
                "n": int(r.size),
                "mean": float(np.mean(r)),
                "variance": float(np.var(r, ddof=1)),
                "skewness": float(stats.skew(r)),
                "kurtosis": float(stats.kurtosis(r, fisher=False)),
                "randomized": self.residuals.randomized,
                "seed": self.residuals.seed,
                "n_clamped": self.residuals.n_clamped,
                "worm_points_outside_band": self.worm.outside,
            },
            "worm_groups": [
                {"variable": self.group_variable, "lower": g.lower, "upper": g.upper, "n": g.plot.n,
                 "points_outside_band": g.plot.outside}
                for g in self.groups
            ],
        }

    def write_residual_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# format_version: {CSV_FORMAT_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "u", "residual"])
            for i, (u, r) in enumerate(zip(self.residuals.u, self.residuals.r), start=1):
                w.writerow([i, repr(float(u)), repr(float(r))])

    def write_worm_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# format_version: {CSV_FORMAT_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "z", "deviation", "lower", "upper"])
            panels = [("all", self.worm)] + [(f"{g.lower!r}..{g.upper!r}", g.plot) for g in self.groups]
            for label, wp in panels:
                for row in wp.rows():
                    w.writerow([label] + [repr(float(v)) for v in row])


def diagnose(fm: FittedModel, data: Dataset, by: str | None = None, bins: int = 4, null: FittedModel | None = None):
    """Residuals, worm plot(s), criteria and pseudo-R^2 for a fitted model."""
    family = get_family(fm.spec.family)
    rs = quantile_residuals(fm, data)
    y = column_values(data, fm.spec.response)
    mean = family.mean(predict(fm, data, "mu"), predict(fm, data, "sigma"))
    if null is None:
        null = null_model(fm, data)
    ll = -0.5 * fm.global_deviance
    ll0 = -0.5 * null.global_deviance
    pr2 = {
        "corr": pseudo_r2_corr(y, mean),
        "mcfadden": pseudo_r2_mcfadden(ll, ll0),
        "coxsnell": pseudo_r2_coxsnell(ll, ll0, fm.n),
    }
    groups = ()
    if by is not None:
        groups = tuple(grouped_worm_plots(rs, column_values(data, by), bins))
    return DiagnosticsReport(
        criteria=criteria(fm.global_deviance, fm.df_total, fm.n),
        residuals=rs,
        worm=worm_plot_data(rs),
        pseudo_r2=pr2,
        groups=groups,
        group_variable=by,
        fitted_mean=mean,
    )
