"""Dataset container, CSV ingestion, derived variables and a synthetic generator.

The hedonic land-lot schema:

=======  ===========  ===============================================
name     kind         values
=======  ===========  ===============================================
UP       continuous   unit price, > 0
AR, FR   continuous   area (m^2) and front (m), > 0
LAT/LON  continuous   UTM metres
UC       discrete     3.0, 3.5, ..., 6.0
ST       discrete     integer 1..18
TO PA    binary       0/1
SI VN SZ binary       0/1
STR      categorical  arterial | collector | local
NI       categorical  offer | transaction | register
YR       categorical  2005 | 2006 | 2007
NB       categorical  optional passthrough
=======  ===========  ===============================================
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, SchemaError
from .families import get_family

CONTINUOUS = "continuous"
DISCRETE = "discrete"
BINARY = "binary"
CATEGORICAL = "categorical"
NUMERIC_KINDS = (CONTINUOUS, DISCRETE, BINARY)

MISSING_TOKENS = {"", "na", "nan", "null", "none"}
TRUTH_FORMAT_VERSION = 1
CSV_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar table.

    Numeric columns are float arrays; categorical columns are object
    arrays of strings.  All arrays are read-only.
    """

    columns: Mapping[str, np.ndarray]
    kinds: Mapping[str, str]
    provenance: str = ""
    dropped_rows: int = 0
    levels: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise SchemaError("columns have unequal lengths")
        for arr in self.columns.values():
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self):
        return list(self.columns)

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def with_columns(self, new: Mapping[str, np.ndarray], kinds: Mapping[str, str]) -> "Dataset":
        cols = dict(self.columns)
        kd = dict(self.kinds)
        for name, values in new.items():
            arr = np.array(values, dtype=float if kinds[name] in NUMERIC_KINDS else object)
            cols[name] = arr
            kd[name] = kinds[name]
        return Dataset(cols, kd, self.provenance, self.dropped_rows, dict(self.levels))

    def take(self, index) -> "Dataset":
        """Rows selected (or reordered) by an integer index."""
        index = np.asarray(index)
        cols = {k: np.array(v[index]) for k, v in self.columns.items()}
        return Dataset(cols, dict(self.kinds), self.provenance, self.dropped_rows, dict(self.levels))

    def numeric(self, name) -> np.ndarray:
        if name not in self.columns:
            raise SchemaError(f"missing column {name!r}")
        if self.kinds[name] not in NUMERIC_KINDS:
            raise SchemaError(f"column {name!r} is categorical")
        return self.columns[name]


# --------------------------------------------------------------------------
# Schema
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnRule:
    kind: str
    positive: bool = False
    allowed: tuple | None = None
    required: bool = True


@dataclass(frozen=True)
class SchemaSpec:
    rules: Mapping[str, ColumnRule]

    @property
    def required(self):
        return [k for k, r in self.rules.items() if r.required]


STR_LEVELS = ("arterial", "collector", "local")
NI_LEVELS = ("offer", "transaction", "register")
YR_LEVELS = ("2005", "2006", "2007")
UC_VALUES = tuple(3.0 + 0.5 * i for i in range(7))
ST_VALUES = tuple(float(i) for i in range(1, 19))

HEDONIC_SCHEMA = SchemaSpec(
    {
        "UP": ColumnRule(CONTINUOUS, positive=True),
        "AR": ColumnRule(CONTINUOUS, positive=True),
        "FR": ColumnRule(CONTINUOUS, positive=True),
        "LAT": ColumnRule(CONTINUOUS),
        "LON": ColumnRule(CONTINUOUS),
        "UC": ColumnRule(DISCRETE, allowed=UC_VALUES),
        "ST": ColumnRule(DISCRETE, allowed=ST_VALUES),
        "TO": ColumnRule(BINARY),
        "PA": ColumnRule(BINARY),
        "SI": ColumnRule(BINARY),
        "VN": ColumnRule(BINARY),
        "SZ": ColumnRule(BINARY),
        "STR": ColumnRule(CATEGORICAL, allowed=STR_LEVELS),
        "NI": ColumnRule(CATEGORICAL, allowed=NI_LEVELS),
        "YR": ColumnRule(CATEGORICAL, allowed=YR_LEVELS),
        "NB": ColumnRule(CATEGORICAL, required=False),
    }
)

HEDONIC_COLUMNS = [k for k in HEDONIC_SCHEMA.rules if k != "NB"]


def _check_rule(name, rule, values, rows):
    problems = []
    if rule.kind in NUMERIC_KINDS:
        if rule.positive:
            bad = values <= 0
            problems += [f"row {rows[i]}: {name}={float(values[i]):g} must be positive" for i in np.flatnonzero(bad)]
        if rule.kind == BINARY:
            bad = ~np.isin(values, (0.0, 1.0))
            problems += [f"row {rows[i]}: {name}={float(values[i]):g} must be 0 or 1" for i in np.flatnonzero(bad)]
        if rule.allowed is not None:
            bad = ~np.isin(values, rule.allowed)
            problems += [f"row {rows[i]}: {name}={float(values[i]):g} not an allowed value" for i in np.flatnonzero(bad)]
    elif rule.allowed is not None:
        allowed = set(rule.allowed)
        problems += [
            f"row {rows[i]}: {name}={v!r} not one of {list(rule.allowed)}" for i, v in enumerate(values) if v not in allowed
        ]
    return problems


def validate_dataset(ds: Dataset, schema: SchemaSpec = HEDONIC_SCHEMA) -> None:
    """Raise :class:`SchemaError` listing every violation (1-based data rows)."""
    missing = [k for k in schema.required if k not in ds]
    if missing:
        raise SchemaError(f"missing required column(s) {', '.join(missing)}")
    rows = np.arange(1, ds.n + 1)
    problems = []
    for name, rule in schema.rules.items():
        if name in ds:
            problems += _check_rule(name, rule, ds[name], rows)
    if problems:
        raise SchemaError("schema violations", problems)


def _infer_kind(cells):
    try:
        vals = [float(c) for c in cells]
    except ValueError:
        return CATEGORICAL
    if set(vals) <= {0.0, 1.0}:
        return BINARY
    return CONTINUOUS


def load_csv(path, schema: SchemaSpec | None = HEDONIC_SCHEMA) -> Dataset:
    """Read a UTF-8 comma-separated file with a header row.

    Leading lines starting with ``#`` (such as the ``format_version``
    marker written by :func:`write_csv`) are skipped.  Rows with a missing
    cell in any column are dropped and counted in ``Dataset.dropped_rows``.
    Row numbers in error messages are physical file lines.
    """
    header, body = None, []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            if header is None:
                if row[0].lstrip().startswith("#"):
                    continue
                header = [h.strip() for h in row]
            else:
                body.append((reader.line_num, row))
    if header is None:
        raise SchemaError(f"{path}: empty file")
    if schema is not None:
        missing = [k for k in schema.required if k not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
    kept, lines, dropped = [], [], 0
    for lineno, row in body:
        if len(row) != len(header):
            raise SchemaError(f"{path}: line {lineno} has {len(row)} cells, header has {len(header)}")
        if any(c.strip().lower() in MISSING_TOKENS for c in row):
            dropped += 1
            continue
        kept.append([c.strip() for c in row])
        lines.append(lineno)
    if not kept:
        raise SchemaError(f"{path}: no complete data rows")

    columns, kinds, levels = {}, {}, {}
    problems = []
    for j, name in enumerate(header):
        cells = [r[j] for r in kept]
        rule = schema.rules.get(name) if schema is not None else None
        kind = rule.kind if rule is not None else _infer_kind(cells)
        if kind in NUMERIC_KINDS:
            vals = np.empty(len(cells))
            for i, c in enumerate(cells):
                try:
                    vals[i] = float(c)
                except ValueError:
                    problems.append(f"line {lines[i]}, column {name}: cannot parse {c!r} as a number")
                    vals[i] = np.nan
            if not problems and not np.all(np.isfinite(vals)):
                problems.append(f"column {name}: non-finite value")
            columns[name] = vals
        else:
            columns[name] = np.array(cells, dtype=object)
            levels[name] = tuple(dict.fromkeys(cells))
        kinds[name] = kind
    if problems:
        raise SchemaError(f"{path}: unparseable cells", problems)
    if schema is not None:
        for name, rule in schema.rules.items():
            if name in columns:
                problems += _check_rule(name, rule, columns[name], lines)
        if problems:
            raise SchemaError(f"{path}: schema violations", problems)
    return Dataset(columns, kinds, provenance=str(path), dropped_rows=dropped, levels=levels)


def _format_cell(value, kind):
    if kind == CATEGORICAL:
        return str(value)
    v = float(value)
    if kind in (BINARY, DISCRETE) and v.is_integer():
        return str(int(v))
    return repr(v)


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces it bit-exactly."""
    names = ds.names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# format_version: {CSV_FORMAT_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        cols = [ds[k] for k in names]
        kinds = [ds.kinds[k] for k in names]
        for i in range(ds.n):
            writer.writerow([_format_cell(c[i], k) for c, k in zip(cols, kinds)])


# --------------------------------------------------------------------------
# Derived variables and term evaluation
# --------------------------------------------------------------------------


def derive_variables(ds: Dataset) -> Dataset:
    """Add dummy codings, logs and the front-in-valued-neighbourhood term.

    Baselines: YR 2005, STR local street, NI register office.
    ``log(FRVN)`` is ``log(max(FR * VN, 1))`` so it vanishes when VN = 0.
    """
    for name in ("AR", "FR", "ST", "UP", "VN", "STR", "NI", "YR"):
        if name not in ds:
            raise SchemaError(f"cannot derive variables: missing column {name!r}")
    ar, fr = ds["AR"], ds["FR"]
    if np.any(ar <= 0):
        raise DomainError("AR", "must be positive")
    if np.any(fr <= 0):
        raise DomainError("FR", "must be positive")
    yr = np.asarray(ds["YR"], dtype=str)
    strt = np.asarray(ds["STR"], dtype=str)
    ni = np.asarray(ds["NI"], dtype=str)
    frvn = fr * ds["VN"]
    new = {
        "YR06": (yr == "2006").astype(float),
        "YR07": (yr == "2007").astype(float),
        "STR1": (strt == "arterial").astype(float),
        "STR2": (strt == "collector").astype(float),
        "NIO": (ni == "offer").astype(float),
        "NIT": (ni == "transaction").astype(float),
        "log(AR)": np.log(ar),
        "log(ST)": np.log(ds["ST"]),
        "log(UP)": np.log(ds["UP"]),
        "FRVN": frvn,
        "log(FRVN)": np.log(np.maximum(frvn, 1.0)),
    }
    kinds = {k: BINARY for k in ("YR06", "YR07", "STR1", "STR2", "NIO", "NIT")}
    kinds.update({k: CONTINUOUS for k in ("log(AR)", "log(ST)", "log(UP)", "FRVN", "log(FRVN)")})
    return ds.with_columns(new, kinds)


def parse_term_expr(expr: str):
    """Split ``'log(AR)'`` into ``('log', 'AR')``; plain names give ``(None, name)``."""
    expr = expr.strip()
    if expr.startswith("log(") and expr.endswith(")"):
        return "log", expr[4:-1].strip()
    return None, expr


def column_values(ds: Dataset, expr: str) -> np.ndarray:
    """Numeric values of a term expression (a column name or ``log(name)``)."""
    if expr in ds:
        return ds.numeric(expr)
    fn, name = parse_term_expr(expr)
    if fn == "log":
        vals = ds.numeric(name)
        if np.any(vals <= 0):
            raise DomainError(expr, "log of non-positive values")
        return np.log(vals)
    raise SchemaError(f"missing column {expr!r}")


def term_kind(kinds: Mapping[str, str], expr: str):
    """Kind of a term expression, or ``None`` if it does not resolve."""
    if expr in kinds:
        return kinds[expr]
    fn, name = parse_term_expr(expr)
    if fn == "log" and name in kinds and kinds[name] in NUMERIC_KINDS:
        return CONTINUOUS
    return None


# --------------------------------------------------------------------------
# Descriptive statistics
# --------------------------------------------------------------------------


def describe(ds: Dataset, variables) -> dict:
    """Mean, median, sample sd, min, max and range per variable."""
    variables = list(variables)
    if not variables:
        raise DomainError("variables", "empty selection")
    out = {}
    for name in variables:
        v = column_values(ds, name)
        lo, hi = float(np.min(v)), float(np.max(v))
        out[name] = {
            "mean": float(np.mean(v)),
            "median": float(np.median(v)),
            "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
            "min": lo,
            "max": hi,
            "range": hi - lo,
        }
    return out


# --------------------------------------------------------------------------
# Synthetic hedonic data
# --------------------------------------------------------------------------

LAT_BOX = (701500.0, 714600.0)
LON_BOX = (8769000.0, 8798000.0)

DEFAULT_TRUTH = {
    "format_version": TRUTH_FORMAT_VERSION,
    "family": "GA",
    "mu": {
        "link": "log",
        "coefficients": {
            "(Intercept)": -95.13,
            "LAT": 5.94e-05,
            "LON": 6.45e-06,
            "log(AR)": -0.2087,
            "UC": 0.2095,
            "ST": 0.0321,
            "STR1": 0.2039,
            "STR2": 0.0729,
            "SI": 0.0711,
            "PA": 0.1653,
            "TO": 0.1778,
            "NIO": 0.3722,
            "NIT": 0.2790,
            "YR06": 0.1255,
            "YR07": 0.4195,
            "SZ": 0.4824,
            "log(FRVN)": 0.6809,
        },
        "smooth": {
            "LAT": {"shape": "cosine", "amplitude": 0.15, "cycles": 2},
            "LON": {"shape": "cosine", "amplitude": 0.10, "cycles": 1},
            "log(AR)": {"shape": "quadratic", "amplitude": 0.04},
        },
    },
    "sigma": {
        "link": "log",
        "coefficients": {"(Intercept)": -1.6838, "ST": -0.0391, "log(AR)": 0.1370},
    },
    "covariates": {
        "log_area_mean": 5.8,
        "log_area_sd": 0.9,
        "log_front_slope": 0.5,
        "log_front_shift": -0.6,
        "log_front_sd": 0.25,
        "p_TO": 0.9,
        "p_PA": 0.7,
        "p_SI": 0.15,
        "p_VN": 0.2,
        "p_SZ": 0.35,
        "p_STR": [0.10, 0.15, 0.75],
        "p_NI": [0.60, 0.10, 0.30],
        "p_YR": [0.30, 0.35, 0.35],
    },
}

# Formula whose structure mirrors the generator (location and dispersion).
DEFAULT_FORMULA = (
    "UP ~ cs(LAT, df=10) + cs(LON, df=10) + cs(log(AR), df=10) + cs(UC, df=3) + cs(ST, df=8)"
    " + STR1 + STR2 + SI + PA + TO + NIO + NIT + YR06 + YR07 + SZ + cs(log(FRVN), df=10)"
    " | sigma: ST + cs(log(AR), df=10)"
)

_MU_TERMS = set(DEFAULT_TRUTH["mu"]["coefficients"])
_SIGMA_TERMS = {"(Intercept)", "ST", "log(AR)", "LAT", "LON", "UC", "log(FRVN)", "STR1", "STR2", "SI", "PA", "TO",
                "NIO", "NIT", "YR06", "YR07", "SZ"}


def load_truth(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        truth = json.load(fh)
    return _validate_truth(truth)


def _validate_truth(truth):
    if truth.get("format_version") != TRUTH_FORMAT_VERSION:
        raise DomainError("truth", f"format_version must be {TRUTH_FORMAT_VERSION}")
    merged = json.loads(json.dumps(DEFAULT_TRUTH))
    for part in ("mu", "sigma"):
        sub = truth.get(part, {})
        coefs = sub.get("coefficients", merged[part]["coefficients"])
        allowed = _MU_TERMS if part == "mu" else _SIGMA_TERMS
        if not isinstance(coefs, dict):
            raise DomainError("truth", f"{part}.coefficients must map term names to numbers")
        unknown = sorted(set(coefs) - allowed)
        if unknown:
            raise DomainError("truth", f"{part} has unknown term(s) {unknown}")
        if "(Intercept)" not in coefs:
            raise DomainError("truth", f"{part} needs an (Intercept)")
        merged[part]["coefficients"] = {k: float(v) for k, v in coefs.items()}
        if "link" in sub:
            merged[part]["link"] = sub["link"]
        if part == "mu" and "smooth" in sub:
            merged["mu"]["smooth"] = sub["smooth"]
    if "family" in truth:
        merged["family"] = truth["family"]
    cov = truth.get("covariates", {})
    for key, val in cov.items():
        if key not in merged["covariates"]:
            raise DomainError("truth", f"unknown covariate setting {key!r}")
        if isinstance(merged["covariates"][key], list) and (
            not isinstance(val, list) or len(val) != len(merged["covariates"][key])
        ):
            raise DomainError("truth", f"covariates.{key} must have {len(merged['covariates'][key])} entries")
        merged["covariates"][key] = val
    return merged


def _smooth_component(spec, values, truth):
    shape = spec["shape"]
    amp = float(spec["amplitude"])
    if shape == "cosine":
        return amp * np.cos(2 * np.pi * spec.get("cycles", 1) * values)
    if shape == "quadratic":
        return amp * (values**2 - 1.0)
    raise DomainError("truth", f"unknown smooth shape {shape!r}")


def simulate_hedonic(seed: int, n: int, truth: dict | None = None, return_truth: bool = False):
    """Draw a synthetic land-lot dataset.

    Covariates are independent: uniform LAT/LON boxes, log-normal area,
    front tied to area, uniform UC and ST grids, Bernoulli binaries and
    multinomial categoricals.  The location predictor adds smooth bends in
    LAT, LON and log(AR) to the linear truth.  Each bend is orthogonal to
    its own intercept and slope under the location weights ``1/sigma^2``;
    for log(AR) this needs the quadratic centred at the weight-tilted mean
    ``m - 2 * gamma_AR * s^2``.  UP is then drawn from the configured
    family (GA by default).
    """
    if n < 50:
        raise DomainError("n", "must be at least 50")
    truth = _validate_truth(DEFAULT_TRUTH if truth is None else truth)
    cov = truth["covariates"]
    rng = np.random.default_rng(seed)

    lat = rng.uniform(*LAT_BOX, size=n)
    lon = rng.uniform(*LON_BOX, size=n)
    m, s = float(cov["log_area_mean"]), float(cov["log_area_sd"])
    log_ar = rng.normal(m, s, size=n)
    log_fr = cov["log_front_slope"] * log_ar + rng.normal(cov["log_front_shift"], cov["log_front_sd"], size=n)
    uc = rng.choice(np.array(UC_VALUES), size=n)
    st = rng.integers(1, 19, size=n).astype(float)
    binaries = {k: (rng.random(n) < cov[f"p_{k}"]).astype(float) for k in ("TO", "PA", "SI", "VN", "SZ")}
    strt = rng.choice(np.array(STR_LEVELS, dtype=object), size=n, p=cov["p_STR"])
    ni = rng.choice(np.array(NI_LEVELS, dtype=object), size=n, p=cov["p_NI"])
    yr = rng.choice(np.array(YR_LEVELS, dtype=object), size=n, p=cov["p_YR"])

    columns = {
        "UP": np.ones(n),
        "AR": np.exp(log_ar),
        "FR": np.exp(log_fr),
        "LAT": lat,
        "LON": lon,
        "UC": uc,
        "ST": st,
        **binaries,
        "STR": strt,
        "NI": ni,
        "YR": yr,
    }
    kinds = {k: HEDONIC_SCHEMA.rules[k].kind for k in columns}
    base = derive_variables(Dataset(columns, kinds, provenance=f"simulate_hedonic(seed={seed}, n={n})"))

    def predictor(part):
        eta = np.zeros(n)
        for term, coef in truth[part]["coefficients"].items():
            eta += coef if term == "(Intercept)" else coef * column_values(base, term)
        return eta

    eta_sigma = predictor("sigma")
    eta_mu = predictor("mu")
    gamma_ar = truth["sigma"]["coefficients"].get("log(AR)", 0.0) if truth["sigma"]["link"] == "log" else 0.0
    for var, spec in truth["mu"].get("smooth", {}).items():
        if var == "LAT":
            u = (lat - LAT_BOX[0]) / (LAT_BOX[1] - LAT_BOX[0])
        elif var == "LON":
            u = (lon - LON_BOX[0]) / (LON_BOX[1] - LON_BOX[0])
        elif var == "log(AR)":
            u = (log_ar - (m - 2.0 * gamma_ar * s * s)) / s
        else:
            raise DomainError("truth", f"no smooth component available for {var!r}")
        eta_mu += _smooth_component(spec, u, truth)

    from .families import link_inverse

    mu = link_inverse(truth["mu"]["link"], eta_mu)
    sigma = link_inverse(truth["sigma"]["link"], eta_sigma)
    fam = get_family(truth["family"])
    up = fam.rvs(mu, sigma, rng)
    columns["UP"] = up
    ds = derive_variables(Dataset(columns, kinds, provenance=f"simulate_hedonic(seed={seed}, n={n})"))
    if return_truth:
        return ds, {"mu": mu, "sigma": sigma}
    return ds


__all__ = [
    "Dataset",
    "SchemaSpec",
    "ColumnRule",
    "HEDONIC_SCHEMA",
    "HEDONIC_COLUMNS",
    "DEFAULT_TRUTH",
    "DEFAULT_FORMULA",
    "load_csv",
    "write_csv",
    "validate_dataset",
    "derive_variables",
    "column_values",
    "term_kind",
    "describe",
    "simulate_hedonic",
    "load_truth",
]
