"""Command-line tool: ``gamlsskit {fit,compare,diagnose,simulate,predict}``.

Every command computes its results in memory first and only then writes
files, so a failing command leaves no partial output.  Errors go to
standard error with exit status 1; standard output stays empty.
``fit`` exits with 2 when the algorithm did not converge (outputs are
still written, flagged ``converged: false``).

The default seed of ``simulate`` comes from the ``GAMLSSKIT_SEED``
environment variable when ``--seed`` is not given.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import box_cox_profile, box_cox_transform, glm_fit_gamma_log, ols_fit
from .data import (
    CSV_FORMAT_VERSION,
    HEDONIC_COLUMNS,
    HEDONIC_SCHEMA,
    Dataset,
    column_values,
    derive_variables,
    load_csv,
    load_truth,
    simulate_hedonic,
    write_csv,
)
from .diagnostics import check_criteria, diagnose, lr_test, pseudo_r2_corr
from .engine import (
    INTERCEPT,
    FittedModel,
    fit,
    load_model,
    model_to_dict,
    predict,
    standard_errors,
)
from .errors import FormulaError
from .families import FAMILIES, LINKS
from .formula import build_spec, parse_formula
from .svg import residual_index_svg, worm_svg

__all__ = ["main", "build_parser", "SEED_ENV", "REPORT_FORMAT_VERSION"]

SEED_ENV = "GAMLSSKIT_SEED"
REPORT_FORMAT_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
CLASSES = ("CNLRM", "GLM", "GAMLSS")


class CliError(Exception):
    """A user-facing failure; the message goes to standard error."""


# --------------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------------


def fmt_fixed(v: float, digits: int = 4) -> str:
    """Fixed-point text without negative zero."""
    if not math.isfinite(v):
        return "NA" if math.isnan(v) else ("Inf" if v > 0 else "-Inf")
    s = f"{v:.{digits}f}"
    return s[1:] if s.startswith("-") and float(s) == 0.0 else s


def fmt_p(p: float) -> str:
    """p-value to 4 decimals with the floor display ``<0.0001``."""
    if not math.isfinite(p):
        return "NA"
    return "<0.0001" if p < 0.0001 else fmt_fixed(p)


def _table(header, rows, align=None) -> str:
    cols = list(zip(*([header] + rows))) if rows else [[h] for h in header]
    widths = [max(len(str(c)) for c in col) for col in cols]
    align = align or ["<"] + [">"] * (len(header) - 1)
    lines = []
    for row in [header] + rows:
        lines.append("  ".join(f"{str(c):{a}{w}}" for c, a, w in zip(row, align, widths)).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def coefficient_table(fm: FittedModel) -> str:
    """Estimate, standard error, z and p per parametric coefficient."""
    rows = [
        [r.parameter, r.term, fmt_fixed(r.estimate), fmt_fixed(r.se), fmt_fixed(r.z, 3), fmt_p(r.p)]
        for r in standard_errors(fm)
    ]
    out = _table(["parameter", "term", "estimate", "std.error", "z", "p"], rows)
    smooth = [[p, t, fmt_fixed(d, 2)] for p, t, d in fm.df_ledger if t.startswith("cs(")]
    if smooth:
        out += "\nsmooth terms (df beyond the linear part)\n"
        out += _table(["parameter", "term", "df"], smooth)
    return out


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False, allow_nan=True) + "\n"


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version: {CSV_FORMAT_VERSION}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# Loading helpers
# --------------------------------------------------------------------------


def _load_data(path) -> Dataset:
    return derive_variables(load_csv(path, HEDONIC_SCHEMA))


def _spec_from_args(formula, family, mu_link, sigma_link, data):
    ast = parse_formula(formula)
    links = {k: v for k, v in (("mu", mu_link), ("sigma", sigma_link)) if v}
    return build_spec(ast, family, links, schema=data)


def _prepare_out_dir(path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise CliError(f"{out}: exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------


def _criteria_dict(fm: FittedModel, report) -> dict:
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "kind": "fit_summary",
        "formula": fm.spec.formula,
        "family": fm.spec.family,
        "links": {k: fm.params[k].link for k in fm.params},
        "n": fm.n,
        "converged": fm.converged,
        "iterations": fm.iterations,
        "global_deviance": fm.global_deviance,
        "df_total": fm.df_total,
        "aic": fm.aic,
        "bic": fm.bic,
        "pseudo_r2": dict(report.pseudo_r2),
        "warnings": list(fm.spec.warnings),
    }


def _criteria_text(fm: FittedModel, report) -> str:
    lines = [
        f"family {fm.spec.family}, n = {fm.n}, converged = {str(fm.converged).lower()} "
        f"after {fm.iterations} iterations",
        f"GD          {fmt_fixed(fm.global_deviance, 2)}",
        f"df          {fmt_fixed(fm.df_total, 2)}",
        f"AIC         {fmt_fixed(fm.aic, 2)}",
        f"BIC         {fmt_fixed(fm.bic, 2)}",
        f"pseudo-R2   {fmt_fixed(report.pseudo_r2['corr'])} (squared correlation)",
        f"McFadden    {fmt_fixed(report.pseudo_r2['mcfadden'])}",
        f"Cox-Snell   {fmt_fixed(report.pseudo_r2['coxsnell'])}",
    ]
    return "\n".join(lines) + "\n"


def cmd_fit(args, out) -> int:
    data = _load_data(args.data)
    spec = _spec_from_args(args.formula, args.family, args.mu_link, args.sigma_link, data)
    fm = fit(spec, data)
    report = diagnose(fm, data)
    files = {
        "coefficients.txt": coefficient_table(fm),
        "criteria.json": _dump_json(_criteria_dict(fm, report)),
        "model.json": _dump_json(model_to_dict(fm)),
        "residuals.csv": _residual_csv(report),
        "worm.svg": worm_svg([("all observations", report.worm)]),
    }
    target = _prepare_out_dir(args.out)
    for name, text in files.items():
        _write(target / name, text)
    for w in spec.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out.write(files["coefficients.txt"])
    out.write("\n")
    out.write(_criteria_text(fm, report))
    if not fm.converged:
        print("warning: fitting did not converge; outputs written with converged=false", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _residual_csv(report) -> str:
    rs = report.residuals
    rows = ([str(i), repr(float(u)), repr(float(r))] for i, (u, r) in enumerate(zip(rs.u, rs.r), start=1))
    return _csv_text(["index", "u", "residual"], rows)


# --------------------------------------------------------------------------
# diagnose
# --------------------------------------------------------------------------


def cmd_diagnose(args, out) -> int:
    fm = load_model(args.model)
    data = _load_data(args.data)
    if data.n != fm.n:
        raise CliError(f"{args.data}: has {data.n} rows but the model was fitted on {fm.n}")
    by = args.worm_by
    if by is not None:
        column_values(data, by)
    report = diagnose(fm, data, by=by, bins=args.bins)
    files = {
        "diagnostics.json": _dump_json(report.to_dict()),
        "residuals.csv": _residual_csv(report),
        "residual_index.svg": residual_index_svg(report.residuals.r),
        "worm.svg": worm_svg([("all observations", report.worm)]),
        "worm.csv": _worm_csv(report),
    }
    if by is not None:
        panels = [(f"{by} in [{g.lower:.4g}, {g.upper:.4g}]", g.plot) for g in report.groups]
        files["worm_by.svg"] = worm_svg(panels, title=f"Worm plots by {by}")
    target = _prepare_out_dir(args.out)
    for name, text in files.items():
        _write(target / name, text)
    out.write(_criteria_text(fm, report))
    r = report.residuals.r
    out.write(f"residual mean {fmt_fixed(float(np.mean(r)))}, variance {fmt_fixed(float(np.var(r, ddof=1)))}, "
              f"worm points outside band {report.worm.outside}\n")
    if report.residuals.n_clamped:
        out.write(f"{report.residuals.n_clamped} probabilities clamped away from 0 or 1\n")
    for g in report.groups:
        out.write(f"  {by} in [{g.lower:.4g}, {g.upper:.4g}]: n = {g.plot.n}, outside band {g.plot.outside}\n")
    return EXIT_OK


def _worm_csv(report) -> str:
    rows = []
    panels = [("all", report.worm)] + [(f"{g.lower!r}..{g.upper!r}", g.plot) for g in report.groups]
    for label, wp in panels:
        for row in wp.rows():
            rows.append([label] + [repr(float(v)) for v in row])
    return _csv_text(["group", "z", "deviation", "lower", "upper"], rows)


# --------------------------------------------------------------------------
# simulate / predict
# --------------------------------------------------------------------------


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV}={raw!r} is not an integer") from None


def cmd_simulate(args, out) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if seed is None:
        raise CliError(f"no seed: pass --seed or set {SEED_ENV}")
    if seed < 0:
        raise CliError("--seed must be non-negative")
    truth = load_truth(args.truth) if args.truth else None
    ds = simulate_hedonic(seed, args.n, truth)
    raw = Dataset({k: ds[k] for k in HEDONIC_COLUMNS}, {k: ds.kinds[k] for k in HEDONIC_COLUMNS},
                  provenance=ds.provenance)
    path = Path(args.out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    write_csv(raw, path)
    out.write(f"wrote {ds.n} rows (seed {seed})\n")
    return EXIT_OK


def cmd_predict(args, out) -> int:
    fm = load_model(args.model)
    data = _load_data(args.data)
    values = predict(fm, data, args.which)
    text = _csv_text(["index", args.which], ([str(i), repr(float(v))] for i, v in enumerate(values, start=1)))
    path = Path(args.out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    _write(path, text)
    out.write(f"wrote {values.size} {args.which} predictions\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------


@dataclass
class CompareRow:
    label: str
    cls: str
    family: str
    scale: str
    gd: float
    df: float
    aic: float
    bic: float
    pseudo_r2: float
    n: int
    fm: FittedModel | None = None


def _read_compare_spec(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not valid JSON ({exc})") from None
    if isinstance(doc, list):
        raise CliError(f"{path}: expected an object with format_version and models")
    if doc.get("format_version") != REPORT_FORMAT_VERSION:
        raise CliError(f"{path}: format_version must be {REPORT_FORMAT_VERSION}")
    models = doc.get("models")
    if not isinstance(models, list) or not models:
        raise CliError(f"{path}: 'models' must be a non-empty list")
    for i, m in enumerate(models):
        if not isinstance(m, dict) or "formula" not in m or "class" not in m:
            raise CliError(f"{path}: model {i + 1} needs 'class' and 'formula'")
        if m["class"] not in CLASSES:
            raise CliError(f"{path}: model {i + 1}: class must be one of {', '.join(CLASSES)}")
    rows = doc.get("reported_criteria", [])
    if not isinstance(rows, list):
        raise CliError(f"{path}: 'reported_criteria' must be a list")
    for i, r in enumerate(rows):
        missing = [k for k in ("gd", "aic", "bic", "n") if k not in r]
        if missing:
            raise CliError(f"{path}: reported_criteria {i + 1} lacks {', '.join(missing)}")
    return doc


def _parametric_design(ast, data, label):
    """Intercept plus plain terms; used by the baseline classes."""
    if ast.sigma is not None:
        raise CliError(f"{label}: the sigma part is only available for GAMLSS models")
    names, cols = [INTERCEPT], [np.ones(data.n)]
    for t in ast.mu:
        if t.is_spline:
            raise CliError(f"{label}: smooth terms are only available for GAMLSS models")
        names.append(t.expr)
        cols.append(column_values(data, t.expr))
    return np.column_stack(cols), names


def _fit_entry(i, entry, data) -> CompareRow:
    cls = entry["class"]
    label = str(entry.get("name") or f"model {i + 1}")
    ast = parse_formula(entry["formula"])
    links = entry.get("links") or {}
    y_expr = ast.response.expr
    y = column_values(data, y_expr)
    if cls == "GAMLSS":
        family = entry.get("family", "GA")
        spec = build_spec(ast, family, links, schema=data)
        fm = fit(spec, data)
        if not fm.converged:
            raise CliError(f"{label}: fitting did not converge")
        report = diagnose(fm, data)
        return CompareRow(label, cls, family, y_expr, fm.global_deviance, fm.df_total, fm.aic, fm.bic,
                          report.pseudo_r2["corr"], fm.n, fm)
    build_spec(ast, "NO" if cls == "CNLRM" else "GA", None, schema=data)
    X, names = _parametric_design(ast, data, label)
    if cls == "GLM":
        family = entry.get("family", "GA")
        link = links.get("mu", "log")
        if family != "GA" or link != "log":
            raise CliError(f"{label}: the GLM baseline supports family GA with log link only")
        g = glm_fit_gamma_log(X, y, names)
        return CompareRow(label, cls, "GA", y_expr, -2 * g.loglik, g.n_params, g.aic, g.bic,
                          pseudo_r2_corr(y, g.mu_hat), g.n)
    # CNLRM: response may be log(V) or V with an optional Box-Cox transform
    family = "NO"
    if entry.get("box_cox"):
        if ast.response.log:
            raise CliError(f"{label}: box_cox needs an untransformed response")
        bc = box_cox_profile(y, X)
        lam = bc.lambda_hat
        z = box_cox_transform(y, lam)
        o = ols_fit(X, z, names)
        back = _box_cox_inverse(o.fitted, lam)
        scale = f"boxcox({y_expr}, {fmt_fixed(lam)})"
        r2 = pseudo_r2_corr(y, back)
    else:
        o = ols_fit(X, y, names)
        scale = y_expr
        if ast.response.log:
            r2 = pseudo_r2_corr(np.exp(y), np.exp(o.fitted))
        else:
            r2 = pseudo_r2_corr(y, o.fitted)
    return CompareRow(label, cls, family, scale, -2 * o.loglik, o.n_params, o.aic, o.bic, r2, o.n)


def _box_cox_inverse(z, lam):
    if abs(lam) < 1e-12:
        return np.exp(z)
    base = np.maximum(lam * z + 1.0, 1e-300)
    return np.exp(np.log(base) / lam)


def _term_sets(fm: FittedModel):
    out = {}
    for k, sub in fm.spec.submodels.items():
        terms = set(sub.terms) | {f"cs({s.expr},{s.df!r})" for s in sub.splines}
        out[k] = (sub.link, terms)
    return out


def _nests(small: CompareRow, big: CompareRow) -> bool:
    a, b = small.fm, big.fm
    if a.spec.family != b.spec.family or a.spec.response != b.spec.response:
        return False
    sa, sb = _term_sets(a), _term_sets(b)
    for k in sa:
        if sa[k][0] != sb[k][0] or not sa[k][1] <= sb[k][1]:
            return False
    return big.df > small.df


def cmd_compare(args, out) -> int:
    doc = _read_compare_spec(args.spec)
    data = _load_data(args.data)
    rows = [_fit_entry(i, e, data) for i, e in enumerate(doc["models"])]
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].pseudo_r2, i))
    ranked = [rows[i] for i in order]
    ref_scale = ranked[0].scale
    comparable = [r.scale == ref_scale for r in ranked]

    table_rows = []
    for r, ok in zip(ranked, comparable):
        mark = "" if ok else " *"
        table_rows.append([r.label, r.cls, r.family, r.scale, fmt_fixed(r.df, 2),
                           fmt_fixed(r.aic, 2) + mark, fmt_fixed(r.bic, 2) + mark, fmt_fixed(r.pseudo_r2)])
    text = _table(["model", "class", "family", "response scale", "df", "AIC", "BIC", "pseudo-R2"], table_rows)
    if not all(comparable):
        text += (f"* response scale differs from {ref_scale}; AIC and BIC are not comparable "
                 f"across response scales\n")

    lr = []
    gamlss = [r for r in rows if r.fm is not None]
    for small in gamlss:
        for big in gamlss:
            if small is not big and _nests(small, big):
                t = lr_test(small.gd, big.gd, small.df, big.df)
                lr.append({"restricted": small.label, "full": big.label, "lambda": t.statistic, "d": t.df,
                           "p": t.p})
    if lr:
        text += "\nlikelihood-ratio tests for nested GAMLSS models\n"
        text += _table(["restricted", "full", "Lambda", "d", "p"],
                       [[x["restricted"], x["full"], fmt_fixed(x["lambda"], 2), fmt_fixed(x["d"], 2), fmt_p(x["p"])]
                        for x in lr])

    crit_rows = [{"name": r.label, "gd": r.gd, "aic": r.aic, "bic": r.bic, "n": r.n, "df": r.df} for r in rows]
    crit_rows += [{"name": str(r.get("name", f"reported {i + 1}")), **r}
                  for i, r in enumerate(doc.get("reported_criteria", []))]
    issues = check_criteria(crit_rows)
    text += "\ncriteria consistency check\n"
    if not issues:
        text += "all rows consistent (AIC = GD + 2 df, BIC = GD + log(n) df)\n"
    for iss in issues:
        text += f"INCONSISTENT {iss.name}: {iss.message}\n"
        if iss.suggestion:
            text += f"  suggestion: {iss.suggestion}\n"

    if args.out:
        report = {
            "format_version": REPORT_FORMAT_VERSION,
            "kind": "comparison",
            "reference_scale": ref_scale,
            "models": [
                {"name": r.label, "class": r.cls, "family": r.family, "response_scale": r.scale, "gd": r.gd,
                 "df": r.df, "aic": r.aic, "bic": r.bic, "pseudo_r2": r.pseudo_r2, "criteria_comparable": ok}
                for r, ok in zip(ranked, comparable)
            ],
            "lr_tests": lr,
            "criteria_issues": [{"name": i.name, "message": i.message, "suggestion": i.suggestion} for i in issues],
        }
        target = _prepare_out_dir(args.out)
        _write(target / "comparison.txt", text)
        _write(target / "comparison.json", _dump_json(report))
    out.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gamlsskit", description="Distributional regression for hedonic price data.")
    p.add_argument("--version", action="version", version=f"gamlsskit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    f = sub.add_parser("fit", help="fit a GAMLSS model")
    f.add_argument("--data", required=True, help="input CSV")
    f.add_argument("--formula", required=True, help="e.g. 'UP ~ cs(LAT, df=10) + SZ | sigma: ST'")
    f.add_argument("--family", required=True, choices=tuple(FAMILIES))
    f.add_argument("--mu-link", choices=tuple(LINKS))
    f.add_argument("--sigma-link", choices=tuple(LINKS))
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(handler=cmd_fit)

    c = sub.add_parser("compare", help="compare models across classes")
    c.add_argument("--data", required=True)
    c.add_argument("--spec", required=True, help="JSON file listing the models")
    c.add_argument("--out", help="optional directory for comparison.txt/json")
    c.set_defaults(handler=cmd_compare)

    d = sub.add_parser("diagnose", help="residual diagnostics of a saved model")
    d.add_argument("--model", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--worm-by", help="variable for grouped worm plots")
    d.add_argument("--bins", type=int, default=4, help="number of quantile bins (default 4)")
    d.set_defaults(handler=cmd_diagnose)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--seed", type=int, help=f"random seed (default from ${SEED_ENV})")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--truth", help="generator truth JSON (default built-in)")
    s.add_argument("--out", required=True)
    s.set_defaults(handler=cmd_simulate)

    q = sub.add_parser("predict", help="predict mu or sigma from a saved model")
    q.add_argument("--model", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--which", choices=("mu", "sigma"), default="mu")
    q.add_argument("--out", required=True)
    q.set_defaults(handler=cmd_predict)
    return p


def main(argv=None) -> int:
    buf = io.StringIO()
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "bins", 4) < 1:
            raise CliError("--bins must be at least 1")
        code = args.handler(args, buf)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except FormulaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CliError, OSError, ValueError, RuntimeError, KeyError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(buf.getvalue())
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
