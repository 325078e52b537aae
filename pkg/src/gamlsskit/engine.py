"""Penalised maximum-likelihood fitting of location and dispersion submodels.

Each distribution parameter ``theta_k`` (``mu``, ``sigma``) has a predictor

    g_k(theta_k) = X_k beta_k + sum_j f_jk(x_jk)

where ``X_k`` holds an intercept, the parametric terms and the linear
part of every spline term, and each ``f_jk`` is the nonlinear remainder of
a cubic smoothing spline with ``df`` extra effective degrees of freedom.

The outer loop cycles over the parameters (``mu`` then ``sigma``), each
time holding the other fixed.  For the active parameter a working response
``z = eta + u / w`` is built from the score ``u`` and weight ``w``; weighted
backfitting then alternates a least-squares update of ``beta`` with
smoothing of partial residuals.  Steps that raise the global deviance are
halved.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg, stats

from .data import Dataset, column_values
from .errors import (
    DegenerateInputError,
    DivergenceError,
    DomainError,
    RankError,
    SchemaError,
)
from .families import PARAM_NAMES, get_family, get_link, score_and_weight
from .smoothers import KnotGrid, SmootherFit, predict_spline, roughness

MODEL_FORMAT_VERSION = 1
INTERCEPT = "(Intercept)"
RANK_TOL = 1e-10
MAX_HALVINGS = 12

__all__ = [
    "SplineTerm",
    "Submodel",
    "ModelSpec",
    "FitOptions",
    "ParameterFit",
    "FittedModel",
    "fit",
    "global_deviance",
    "penalized_loglik",
    "predict",
    "standard_errors",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]


# --------------------------------------------------------------------------
# Specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplineTerm:
    """``cs(expr, df=df)``: linear part plus ``df`` extra smoothing df."""

    expr: str
    df: float

    def __post_init__(self):
        if not (self.df >= 0 and math.isfinite(self.df)):
            raise DomainError("df", f"spline df must be a finite non-negative number, got {self.df}")


@dataclass(frozen=True)
class Submodel:
    """Additive predictor for one distribution parameter."""

    link: str
    terms: tuple = ()
    splines: tuple = ()

    def __post_init__(self):
        get_link(self.link)
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "splines", tuple(self.splines))
        names = list(self.terms) + [s.expr for s in self.splines]
        dup = sorted({t for t in names if names.count(t) > 1})
        if dup:
            raise DomainError("terms", f"repeated term(s) {dup}")

    @property
    def columns(self):
        """Parametric design columns: intercept, terms, spline linear parts."""
        return (INTERCEPT,) + self.terms + tuple(s.expr for s in self.splines)

    @property
    def smooth_terms(self):
        return tuple(s for s in self.splines if s.df > 0)

    @property
    def df(self) -> float:
        return len(self.columns) + sum(s.df for s in self.splines)


@dataclass(frozen=True)
class ModelSpec:
    response: str
    family: str
    mu: Submodel
    sigma: Submodel = Submodel("log")
    formula: str = ""
    warnings: tuple = ()

    def __post_init__(self):
        get_family(self.family)
        for sub in (self.mu, self.sigma):
            if self.response in sub.columns:
                raise DomainError("response", f"{self.response!r} also appears as a covariate")

    @property
    def submodels(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}

    def df_ledger(self):
        """``(parameter, term, df)`` rows; spline rows carry the extra df."""
        rows = []
        for name, sub in self.submodels.items():
            for col in sub.columns:
                rows.append((name, col, 1.0))
            for s in sub.splines:
                rows.append((name, f"cs({s.expr}, df={_fmt_num(s.df)})", float(s.df)))
        return rows

    @property
    def df_total(self) -> float:
        return float(sum(sub.df for sub in self.submodels.values()))


def _fmt_num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


@dataclass(frozen=True)
class FitOptions:
    max_outer: int = 50
    max_inner: int = 30
    tol: float = 1e-6


# --------------------------------------------------------------------------
# Fitted model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterFit:
    """Fitted submodel of one distribution parameter."""

    name: str
    link: str
    coef_names: tuple
    beta: np.ndarray
    smoothers: Mapping[str, SmootherFit]
    eta: np.ndarray | None
    fitted: np.ndarray | None
    vcov: np.ndarray
    se: np.ndarray


@dataclass(frozen=True)
class FittedModel:
    spec: ModelSpec
    params: Mapping[str, ParameterFit]
    global_deviance: float
    df_total: float
    df_ledger: tuple
    n: int
    converged: bool
    iterations: int
    gd_trace: tuple = ()
    y: np.ndarray | None = field(default=None, repr=False)

    @property
    def mu(self) -> ParameterFit:
        return self.params["mu"]

    @property
    def sigma(self) -> ParameterFit:
        return self.params["sigma"]

    @property
    def aic(self) -> float:
        return self.global_deviance + 2.0 * self.df_total

    @property
    def bic(self) -> float:
        return self.global_deviance + math.log(self.n) * self.df_total

    @property
    def loglik(self) -> float:
        return -0.5 * self.global_deviance


# --------------------------------------------------------------------------
# Design handling
# --------------------------------------------------------------------------


def _design(sub: Submodel, data: Dataset) -> np.ndarray:
    cols = [np.ones(data.n)]
    for expr in sub.columns[1:]:
        cols.append(np.asarray(column_values(data, expr), dtype=float))
    return np.column_stack(cols)


def check_rank(X, names):
    """Raise :class:`RankError` naming the columns that are linearly dependent."""
    scale = np.sqrt(np.sum(X * X, axis=0))
    zero = [names[j] for j in np.flatnonzero(scale == 0)]
    if zero:
        raise RankError("design has all-zero column(s)", zero)
    _, r, piv = linalg.qr(X / scale, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > RANK_TOL * d[0]))
    if rank < X.shape[1]:
        # each dropped column is a combination of the kept ones; name all
        # columns that take part in some combination
        coef = linalg.solve_triangular(r[:rank, :rank], r[:rank, rank:])
        involved = set(piv[rank:].tolist())
        for c in coef.T:
            involved.update(piv[:rank][np.abs(c) > 1e-8 * max(1.0, np.max(np.abs(c)))].tolist())
        dependent = [names[j] for j in sorted(involved)]
        raise RankError("design is rank deficient; linearly dependent column(s)", dependent)


class _WLS:
    """Weighted least squares with a fixed design, factorised once per weight vector."""

    def __init__(self, X, w, names):
        self.X = X
        self.sw = np.sqrt(w)
        q, r = linalg.qr(X * self.sw[:, None], mode="economic")
        d = np.abs(np.diag(r))
        if d.min() <= RANK_TOL * d.max():
            check_rank(X, names)
            raise RankError("weighted design is numerically singular", names)
        self.q, self.r = q, r

    def solve(self, z):
        return linalg.solve_triangular(self.r, self.q.T @ (self.sw * z))


@dataclass
class _Term:
    """Mutable per-smoother state during fitting."""

    spline: SplineTerm
    x: np.ndarray
    grid: KnotGrid
    values: np.ndarray  # nonlinear part at the knots
    fit: SmootherFit | None = None

    @property
    def contribution(self):
        return self.values[self.grid.inverse]


@dataclass
class _State:
    beta: np.ndarray | None
    terms: list

    def eta(self, X):
        out = X @ self.beta
        for t in self.terms:
            out = out + t.contribution
        return out


def _remove_line(grid: KnotGrid, W, g):
    """Subtract the knot-weighted least-squares line from knot values ``g``."""
    t = grid.knots
    tw = np.sum(W * t) / np.sum(W)
    d = t - tw
    slope = np.sum(W * d * g) / np.sum(W * d * d)
    icpt = np.sum(W * g) / np.sum(W) - slope * tw
    return icpt, slope


def _backfit(z, w, X, names, state: _State, options: FitOptions):
    """Weighted backfitting of ``z`` on the parametric design plus smoothers."""
    wls = _WLS(X, w, names)
    terms = [
        _Term(t.spline, t.x, t.grid, t.values.copy(), t.fit)
        for t in state.terms
    ]
    lams, knot_w = [], []
    for t in terms:
        W = t.grid.aggregate(w)
        target = t.spline.df + 2.0
        if target > t.grid.m:
            raise DomainError(
                "df", f"cs({t.spline.expr}) asks for {t.spline.df} extra df but has only {t.grid.m} distinct values"
            )
        lams.append(t.grid.lambda_for_edf(W, target))
        knot_w.append(W)

    smooth_sum = np.zeros_like(z)
    for t in terms:
        smooth_sum += t.contribution
    beta = wls.solve(z - smooth_sum)
    lin = X @ beta
    for _ in range(options.max_inner):
        change = 0.0
        for j, t in enumerate(terms):
            old = t.contribution
            partial = z - lin - (smooth_sum - old)
            W, ybar = t.grid.aggregate(w, partial)
            g, second = t.grid.smooth(W, ybar, lams[j])
            a, b = _remove_line(t.grid, W, g)
            t.values = g - a - b * t.grid.knots
            edf = t.grid.trace(W, lams[j])
            t.fit = SmootherFit(t.grid.knots, t.values, second, lams[j], float(edf), None)
            new = t.contribution
            smooth_sum += new - old
            change = max(change, float(np.max(np.abs(new - old))))
        beta_new = wls.solve(z - smooth_sum)
        lin_new = X @ beta_new
        change = max(change, float(np.max(np.abs(lin_new - lin))))
        beta, lin = beta_new, lin_new
        if change < options.tol or not terms:
            break
    return _State(beta, terms)


def _blend(old: _State, new: _State, step: float) -> _State:
    terms = []
    for to, tn in zip(old.terms, new.terms):
        vals = to.values + step * (tn.values - to.values)
        fit = None
        if tn.fit is not None:
            second = tn.fit.second_derivs if to.fit is None else to.fit.second_derivs + step * (
                tn.fit.second_derivs - to.fit.second_derivs
            )
            fit = SmootherFit(tn.fit.knots, vals, second, tn.fit.lam, tn.fit.edf, None)
        terms.append(_Term(tn.spline, tn.x, tn.grid, vals, fit))
    return _State(old.beta + step * (new.beta - old.beta), terms)


def _safe_gd(family, y, mu, sigma):
    if not family.valid_params(mu, sigma):
        return math.inf
    with np.errstate(all="ignore"):
        gd = -2.0 * float(np.sum(family.logpdf(y, mu, sigma)))
    return gd if math.isfinite(gd) else math.inf


def _inverse_or_none(link, eta):
    lk = get_link(link)
    if not np.all(lk.image(eta)):
        return None
    with np.errstate(all="ignore"):
        return lk.inverse(eta)


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


def fit(spec: ModelSpec, data: Dataset, options: FitOptions | Mapping | None = None, start=None) -> FittedModel:
    """Fit ``spec`` to ``data`` by penalised maximum likelihood.

    Parameters
    ----------
    spec : ModelSpec
    data : Dataset
    options : FitOptions or mapping, optional
        ``max_outer`` (50), ``max_inner`` (30), ``tol`` (1e-6).  Outer
        convergence is ``|delta GD| < tol * n``; inner backfitting stops when
        no fitted term moves by more than ``tol``.
    start : FittedModel, optional
        Use the fitted parameters of an earlier fit as starting values.

    Returns
    -------
    FittedModel
    """
    if options is None:
        options = FitOptions()
    elif not isinstance(options, FitOptions):
        options = FitOptions(**dict(options))
    if options.max_outer < 1 or options.max_inner < 1 or not options.tol > 0:
        raise DomainError("options", "max_outer and max_inner must be >= 1 and tol > 0")
    family = get_family(spec.family)
    y = np.asarray(column_values(data, spec.response), dtype=float)
    n = y.size
    family.check(y, np.ones_like(y), np.ones_like(y))
    if n <= spec.df_total:
        raise DegenerateInputError(f"n = {n} does not exceed the model df {spec.df_total:g}")

    designs, states = {}, {}
    for name, sub in spec.submodels.items():
        X = _design(sub, data)
        check_rank(X, sub.columns)
        designs[name] = X
        terms = []
        for s in sub.smooth_terms:
            x = np.asarray(column_values(data, s.expr), dtype=float)
            grid = KnotGrid(x)
            terms.append(_Term(s, x, grid, np.zeros(grid.m)))
        states[name] = _State(None, terms)

    # starting values
    links = {k: spec.submodels[k].link for k in PARAM_NAMES}
    if start is not None:
        theta = {k: np.asarray(start.params[k].fitted, dtype=float).copy() for k in PARAM_NAMES}
        for k in PARAM_NAMES:
            states[k] = _state_from_fit(start.params[k], states[k])
    else:
        mu0 = np.asarray(family.initial_mu(y), dtype=float)
        sig0 = max(float(family.initial_sigma(y)), 0.1)
        theta = {"mu": mu0, "sigma": np.full(n, sig0)}
        sig_eta = float(get_link(links["sigma"]).forward(np.asarray(sig0)))
        beta = np.zeros(designs["sigma"].shape[1])
        beta[0] = sig_eta
        states["sigma"] = _State(beta, states["sigma"].terms)
    for k in PARAM_NAMES:
        lk = get_link(links[k])
        if not np.all(lk.domain(theta[k])):
            raise DomainError("link", f"{lk.name} link cannot represent the starting {k} values")
    eta = {k: get_link(links[k]).forward(theta[k]) for k in PARAM_NAMES}

    gd = _safe_gd(family, y, theta["mu"], theta["sigma"])
    if not math.isfinite(gd):
        raise DivergenceError("global deviance is not finite at the starting values", [gd])
    trace = []
    converged = False
    iterations = 0
    for it in range(1, options.max_outer + 1):
        iterations = it
        gd_start = gd
        for k in PARAM_NAMES:
            sub = spec.submodels[k]
            X = designs[k]
            u, w = score_and_weight(family, y, theta, k, links[k])
            z = eta[k] + u / w
            new_state = _backfit(z, w, X, sub.columns, states[k], options)
            step = 1.0
            old_state = states[k]
            cand_state = new_state
            accepted = False
            for _ in range(MAX_HALVINGS + 1):
                cand_eta = cand_state.eta(X)
                cand_theta = _inverse_or_none(links[k], cand_eta)
                if cand_theta is not None:
                    trial = dict(theta)
                    trial[k] = cand_theta
                    cand_gd = _safe_gd(family, y, trial["mu"], trial["sigma"])
                else:
                    cand_gd = math.inf
                if old_state.beta is None:
                    if not math.isfinite(cand_gd):
                        raise DivergenceError("global deviance became non-finite", trace + [cand_gd])
                    accepted = True
                    break
                if cand_gd <= gd + 1e-10 * max(1.0, abs(gd)):
                    accepted = True
                    break
                step *= 0.5
                cand_state = _blend(old_state, new_state, step)
            if accepted:
                states[k] = cand_state
                eta[k] = cand_eta
                theta[k] = cand_theta
                gd = cand_gd
        trace.append(gd)
        if not math.isfinite(gd):
            raise DivergenceError("global deviance became non-finite", trace)
        if abs(gd_start - gd) < options.tol * n:
            converged = True
            break

    return _finalize(spec, data, family, y, designs, states, links, converged, iterations, trace)


def _state_from_fit(pf: ParameterFit, template: _State) -> _State:
    terms = []
    for t in template.terms:
        sf = pf.smoothers[t.spline.expr]
        if sf.knots.shape != t.grid.knots.shape or not np.array_equal(sf.knots, t.grid.knots):
            vals = predict_spline(sf, t.grid.knots)
        else:
            vals = np.array(sf.values, dtype=float)
        terms.append(_Term(t.spline, t.x, t.grid, vals, sf))
    return _State(np.array(pf.beta, dtype=float), terms)


def _finalize(spec, data, family, y, designs, states, links, converged, iterations, trace):
    params = {}
    theta = {}
    smoothers_all = {}
    for k in PARAM_NAMES:
        st = states[k]
        smoothers = {}
        for t in st.terms:
            sf = t.fit
            if sf is None:
                # spline never updated (max_outer = 0); represent as flat
                sf = SmootherFit(t.grid.knots, t.values, np.zeros(t.grid.m), 0.0, 2.0, None)
            smoothers[t.spline.expr] = sf
        smoothers_all[k] = smoothers
    # rebuild predictors through the prediction path so that predict() on the
    # training data reproduces the fitted values bit-for-bit
    eta = {}
    for k in PARAM_NAMES:
        sub = spec.submodels[k]
        smoothers = smoothers_all[k]
        e = designs[k] @ states[k].beta
        for s in sub.smooth_terms:
            sf = smoothers[s.expr]
            fitted_vals = predict_spline(sf, column_values(data, s.expr))
            smoothers[s.expr] = SmootherFit(sf.knots, sf.values, sf.second_derivs, sf.lam, sf.edf, fitted_vals)
            e = e + fitted_vals
        eta[k] = e
        theta[k] = get_link(links[k]).inverse(e)
    gd = _safe_gd(family, y, theta["mu"], theta["sigma"])
    if not math.isfinite(gd):
        raise DivergenceError("global deviance is not finite at the final estimates", trace + [gd])
    for k in PARAM_NAMES:
        sub = spec.submodels[k]
        _, w = score_and_weight(family, y, theta, k, links[k])
        vcov = _vcov(designs[k], w, sub.columns)
        params[k] = ParameterFit(
            name=k,
            link=links[k],
            coef_names=sub.columns,
            beta=states[k].beta,
            smoothers=smoothers_all[k],
            eta=eta[k],
            fitted=theta[k],
            vcov=vcov,
            se=np.sqrt(np.diag(vcov)),
        )
        for arr in (params[k].beta, params[k].eta, params[k].fitted, params[k].vcov, params[k].se):
            arr.setflags(write=False)
    y = np.array(y)
    y.setflags(write=False)
    return FittedModel(
        spec=spec,
        params=params,
        global_deviance=gd,
        df_total=spec.df_total,
        df_ledger=tuple(spec.df_ledger()),
        n=int(y.size),
        converged=converged,
        iterations=iterations,
        gd_trace=tuple(trace),
        y=y,
    )


def _vcov(X, w, names):
    xtwx = X.T @ (X * w[:, None])
    try:
        c = linalg.cho_factor(xtwx)
    except linalg.LinAlgError:
        raise RankError("information matrix is singular", names) from None
    return linalg.cho_solve(c, np.eye(X.shape[1]))


# --------------------------------------------------------------------------
# Quantities derived from a fit
# --------------------------------------------------------------------------


def global_deviance(fm: FittedModel, data: Dataset) -> float:
    """``-2 * sum_i log f(y_i | fitted parameters)``, evaluated on ``data``."""
    family = get_family(fm.spec.family)
    y = np.asarray(column_values(data, fm.spec.response), dtype=float)
    mu = predict(fm, data, "mu")
    sigma = predict(fm, data, "sigma")
    y, mu, sigma = family.check(y, mu, sigma)
    return -2.0 * float(np.sum(family.logpdf(y, mu, sigma)))


def penalized_loglik(fm: FittedModel, data: Dataset) -> float:
    """Log-likelihood minus ``0.5 * sum lam * integral f''^2`` over all smoothers."""
    ll = -0.5 * global_deviance(fm, data)
    penalty = 0.0
    for pf in fm.params.values():
        for sf in pf.smoothers.values():
            if sf.lam > 0:
                penalty += sf.lam * roughness(sf)
    return ll - 0.5 * penalty


def linear_predictor(fm: FittedModel, new_data: Dataset, which: str = "mu") -> np.ndarray:
    if which not in fm.params:
        raise DomainError("which", f"expected one of {list(fm.params)}")
    pf = fm.params[which]
    sub = fm.spec.submodels[which]
    try:
        X = _design(sub, new_data)
        eta = X @ pf.beta
        for s in sub.smooth_terms:
            eta = eta + predict_spline(pf.smoothers[s.expr], column_values(new_data, s.expr))
    except KeyError as exc:
        raise SchemaError(f"missing column {exc.args[0]!r}") from None
    return eta


def predict(fm: FittedModel, new_data: Dataset, which: str = "mu") -> np.ndarray:
    """Fitted distribution parameter ``which`` for the rows of ``new_data``."""
    eta = linear_predictor(fm, new_data, which)
    return get_link(fm.params[which].link).inverse(eta)


@dataclass(frozen=True)
class CoefRow:
    parameter: str
    term: str
    estimate: float
    se: float
    z: float
    p: float


def standard_errors(fm: FittedModel):
    """Per-coefficient ``(se, z, p)`` rows, two-sided normal p-values.

    Standard errors come from the weighted cross-product of the parametric
    design at convergence; smoothing parameters are held fixed.
    """
    rows = []
    for k, pf in fm.params.items():
        for name, b, se in zip(pf.coef_names, pf.beta, pf.se):
            if not (se > 0 and math.isfinite(se)):
                raise RankError("information matrix is singular", [name])
            z = float(b) / float(se)
            p = float(2.0 * stats.norm.sf(abs(z)))
            rows.append(CoefRow(k, name, float(b), float(se), z, p))
    return rows


# --------------------------------------------------------------------------
# Serialisation
# --------------------------------------------------------------------------


def _spec_to_dict(spec: ModelSpec):
    return {
        "response": spec.response,
        "family": spec.family,
        "formula": spec.formula,
        "submodels": {
            k: {
                "link": sub.link,
                "terms": list(sub.terms),
                "splines": [{"expr": s.expr, "df": s.df} for s in sub.splines],
            }
            for k, sub in spec.submodels.items()
        },
    }


def _spec_from_dict(d):
    subs = {}
    for k in PARAM_NAMES:
        sd = d["submodels"][k]
        subs[k] = Submodel(
            sd["link"], tuple(sd["terms"]), tuple(SplineTerm(s["expr"], float(s["df"])) for s in sd["splines"])
        )
    return ModelSpec(d["response"], d["family"], subs["mu"], subs["sigma"], d.get("formula", ""))


def model_to_dict(fm: FittedModel) -> dict:
    """JSON-ready representation (no per-observation vectors)."""
    params = {}
    for k, pf in fm.params.items():
        params[k] = {
            "link": pf.link,
            "coefficients": [
                {"term": t, "estimate": float(b), "se": float(s)} for t, b, s in zip(pf.coef_names, pf.beta, pf.se)
            ],
            "vcov": [[float(v) for v in row] for row in pf.vcov],
            "smoothers": [
                {
                    "expr": expr,
                    "lambda": float(sf.lam),
                    "edf": float(sf.edf),
                    "knots": [float(v) for v in sf.knots],
                    "values": [float(v) for v in sf.values],
                    "second_derivs": [float(v) for v in sf.second_derivs],
                }
                for expr, sf in pf.smoothers.items()
            ],
        }
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "gamlss",
        "spec": _spec_to_dict(fm.spec),
        "n": fm.n,
        "global_deviance": fm.global_deviance,
        "df_total": fm.df_total,
        "df_ledger": [{"parameter": p, "term": t, "df": d} for p, t, d in fm.df_ledger],
        "aic": fm.aic,
        "bic": fm.bic,
        "converged": fm.converged,
        "iterations": fm.iterations,
        "gd_trace": list(fm.gd_trace),
        "parameters": params,
    }


def model_from_dict(d: dict) -> FittedModel:
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise SchemaError(f"unsupported model format_version {d.get('format_version')!r}")
    spec = _spec_from_dict(d["spec"])
    params = {}
    for k in PARAM_NAMES:
        pd = d["parameters"][k]
        coefs = pd["coefficients"]
        smoothers = {}
        for s in pd["smoothers"]:
            smoothers[s["expr"]] = SmootherFit(
                np.array(s["knots"], dtype=float),
                np.array(s["values"], dtype=float),
                np.array(s["second_derivs"], dtype=float),
                float(s["lambda"]),
                float(s["edf"]),
                None,
            )
        params[k] = ParameterFit(
            name=k,
            link=pd["link"],
            coef_names=tuple(c["term"] for c in coefs),
            beta=np.array([c["estimate"] for c in coefs], dtype=float),
            smoothers=smoothers,
            eta=None,
            fitted=None,
            vcov=np.array(pd["vcov"], dtype=float),
            se=np.array([c["se"] for c in coefs], dtype=float),
        )
    return FittedModel(
        spec=spec,
        params=params,
        global_deviance=float(d["global_deviance"]),
        df_total=float(d["df_total"]),
        df_ledger=tuple((r["parameter"], r["term"], float(r["df"])) for r in d["df_ledger"]),
        n=int(d["n"]),
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        gd_trace=tuple(d.get("gd_trace", ())),
    )


def save_model(fm: FittedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(fm), fh, indent=1)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if d.get("kind") != "gamlss":
        raise SchemaError(f"{path}: not a fitted-model document")
    return model_from_dict(d)
