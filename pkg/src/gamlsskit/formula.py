"""Two-part model formulas.

Grammar (whitespace-insensitive)::

    formula  := resp "~" terms [ "|" "sigma" ":" terms ]
    terms    := "1" | term ("+" term)*
    term     := IDENT | "log(" IDENT ")" | "cs(" arg "," "df" "=" NUMBER ")"
    arg      := IDENT | "log(" IDENT ")"
    resp     := arg

``1`` alone denotes an intercept-only submodel; every submodel has an
intercept.  Example::

    UP ~ cs(LAT, df=10) + SZ | sigma: ST + cs(log(AR), df=10)
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .data import (
    BINARY,
    CATEGORICAL,
    CONTINUOUS,
    DISCRETE,
    HEDONIC_SCHEMA,
    Dataset,
    SchemaSpec,
    term_kind,
)
from .engine import ModelSpec, SplineTerm, Submodel
from .errors import FormulaError
from .families import get_family, get_link

__all__ = ["Term", "FormulaAst", "parse_formula", "build_spec", "DERIVED_KINDS"]

FUNCTIONS = ("log", "cs")

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>[~+|:(),=-]))"
)


@dataclass(frozen=True)
class Term:
    """One additive term.  ``column`` is its 1-based start position."""

    name: str
    log: bool = False
    df: float | None = None
    column: int = 0

    @property
    def is_spline(self) -> bool:
        return self.df is not None

    @property
    def expr(self) -> str:
        return f"log({self.name})" if self.log else self.name

    def __str__(self):
        if self.is_spline:
            return f"cs({self.expr}, df={_fmt_df(self.df)})"
        return self.expr

    def __eq__(self, other):
        return isinstance(other, Term) and (self.name, self.log, self.df) == (other.name, other.log, other.df)

    def __hash__(self):
        return hash((self.name, self.log, self.df))


def _fmt_df(df: float) -> str:
    return str(int(df)) if float(df).is_integer() else repr(float(df))


@dataclass(frozen=True)
class FormulaAst:
    response: Term
    mu: tuple
    sigma: tuple | None = None

    def __str__(self):
        out = f"{self.response.expr} ~ {_join(self.mu)}"
        if self.sigma is not None:
            out += f" | sigma: {_join(self.sigma)}"
        return out


def _join(terms):
    return " + ".join(str(t) for t in terms) if terms else "1"


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Tokens:
    def __init__(self, text):
        self.text = text
        self.items = []  # (kind, value, column)
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            mt = _TOKEN.match(text, pos)
            if mt is None or mt.end() == pos:
                col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
                raise FormulaError(f"unexpected character {text[col - 1]!r}", text, col)
            kind = mt.lastgroup
            start = mt.start(kind)
            self.items.append((kind, mt.group(kind), start + 1))
            pos = mt.end()
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else ("end", "", len(self.text) + 1)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value, what=None):
        kind, val, col = self.next()
        if val != value or kind == "end":
            found = "end of formula" if kind == "end" else repr(val)
            raise FormulaError(f"expected {what or repr(value)}, found {found}", self.text, col)
        return col


def _parse_arg(tk: _Tokens):
    kind, val, col = tk.next()
    if kind != "ident":
        found = "end of formula" if kind == "end" else repr(val)
        raise FormulaError(f"expected a variable name, found {found}", tk.text, col)
    if tk.peek()[1] == "(":
        if val == "cs":
            raise FormulaError("cs() cannot be nested", tk.text, col)
        if val != "log":
            raise FormulaError(f"unknown function '{val}'", tk.text, col)
        tk.next()
        k2, name, c2 = tk.next()
        if k2 != "ident" or tk.peek()[1] == "(":
            raise FormulaError("log() takes a single variable name", tk.text, c2)
        tk.expect(")", "')'")
        return Term(name, log=True, column=col)
    return Term(val, column=col)


def _parse_term(tk: _Tokens):
    kind, val, col = tk.peek()
    is_call = tk.i + 1 < len(tk.items) and tk.items[tk.i + 1][1] == "("
    if kind == "ident" and is_call:
        if val == "cs":
            tk.next()
            tk.next()
            arg = _parse_arg(tk)
            tk.expect(",", "',' before df")
            k2, v2, c2 = tk.next()
            if v2 != "df":
                raise FormulaError("malformed df: expected 'df=NUMBER'", tk.text, c2)
            tk.expect("=", "'=' after df")
            k3, v3, c3 = tk.next()
            if k3 == "op" and v3 == "-":
                raise FormulaError("malformed df: must be a positive number", tk.text, c3)
            if k3 != "num":
                found = "end of formula" if k3 == "end" else repr(v3)
                raise FormulaError(f"malformed df: expected a number, found {found}", tk.text, c3)
            df = float(v3)
            if not df > 0:
                raise FormulaError("malformed df: must be a positive number", tk.text, c3)
            tk.expect(")", "')'")
            return Term(arg.name, log=arg.log, df=df, column=col)
        if val not in FUNCTIONS:
            raise FormulaError(f"unknown function '{val}'", tk.text, col)
    return _parse_arg(tk)


def _parse_terms(tk: _Tokens):
    kind, val, col = tk.peek()
    if kind == "num":
        tk.next()
        if val != "1" or tk.peek()[1] == "+":
            raise FormulaError("only '1' may stand alone as an intercept-only model", tk.text, col)
        return ()
    terms = []
    seen = {}
    while True:
        term = _parse_term(tk)
        key = (term.name, term.log)
        if key in seen:
            raise FormulaError(f"duplicate term '{term.expr}'", tk.text, term.column)
        seen[key] = term
        terms.append(term)
        if tk.peek()[1] != "+":
            break
        tk.next()
    return tuple(terms)


def parse_formula(text: str) -> FormulaAst:
    """Parse a two-part formula; errors carry a caret position."""
    if not isinstance(text, str) or not text.strip():
        raise FormulaError("empty formula", text or "", 1)
    tk = _Tokens(text)
    resp = _parse_arg(tk)
    tk.expect("~", "'~'")
    mu = _parse_terms(tk)
    sigma = None
    kind, val, col = tk.peek()
    if val == "|" and kind == "op":
        tk.next()
        k2, v2, c2 = tk.next()
        if v2 != "sigma":
            raise FormulaError("expected 'sigma:' after '|'", text, c2)
        tk.expect(":", "':' after sigma")
        sigma = _parse_terms(tk)
    kind, val, col = tk.peek()
    if kind != "end":
        raise FormulaError(f"unexpected {val!r}", text, col)
    for t in mu + (sigma or ()):
        if (t.name, t.log) == (resp.name, resp.log):
            raise FormulaError(f"response '{resp.expr}' used as a covariate", text, t.column)
    return FormulaAst(resp, mu, sigma)


# --------------------------------------------------------------------------
# Specification building
# --------------------------------------------------------------------------

DERIVED_KINDS = {
    **{k: r.kind for k, r in HEDONIC_SCHEMA.rules.items()},
    **{k: BINARY for k in ("YR06", "YR07", "STR1", "STR2", "NIO", "NIT")},
    **{k: CONTINUOUS for k in ("log(AR)", "log(ST)", "log(UP)", "FRVN", "log(FRVN)")},
}


def _kinds_of(schema) -> Mapping[str, str]:
    if schema is None:
        return DERIVED_KINDS
    if isinstance(schema, Dataset):
        return dict(schema.kinds)
    if isinstance(schema, SchemaSpec):
        return {**{k: r.kind for k, r in schema.rules.items()}, **{k: v for k, v in DERIVED_KINDS.items()
                                                                     if k not in HEDONIC_SCHEMA.rules}}
    return dict(schema)


def build_spec(ast: FormulaAst, family: str, links: Mapping[str, str] | None = None, schema=None) -> ModelSpec:
    """Validate ``ast`` against variable kinds and assemble a :class:`ModelSpec`.

    Parameters
    ----------
    ast : FormulaAst
    family : family name
    links : optional ``{"mu": ..., "sigma": ...}``; family defaults otherwise
    schema : Dataset, SchemaSpec or mapping of variable kinds; defaults to
        the hedonic schema plus the derived variables
    """
    fam = get_family(family)
    kinds = _kinds_of(schema)
    links = dict(links or {})
    link_names = {}
    for k in ("mu", "sigma"):
        link_names[k] = links.get(k) or fam.default_links[k]
        get_link(link_names[k])
    text = str(ast)

    def resolve(term: Term):
        kind = term_kind(kinds, term.expr)
        if kind is None:
            raise FormulaError(f"unknown variable '{term.expr}'", text, _pos(text, term))
        return kind

    if term_kind(kinds, ast.response.expr) is None:
        raise FormulaError(f"unknown variable '{ast.response.expr}'", text, 1)
    if term_kind(kinds, ast.response.expr) == CATEGORICAL:
        raise FormulaError("response must be numeric", text, 1)

    subs = {}
    for k, terms in (("mu", ast.mu), ("sigma", ast.sigma or ())):
        params, splines = [], []
        for term in terms:
            kind = resolve(term)
            if term.is_spline:
                if kind not in (CONTINUOUS, DISCRETE):
                    raise FormulaError("spline on non-continuous variable", text, _pos(text, term))
                splines.append(SplineTerm(term.expr, float(term.df)))
            else:
                if kind == CATEGORICAL:
                    raise FormulaError(
                        f"categorical variable '{term.expr}' must enter through its dummy columns",
                        text,
                        _pos(text, term),
                    )
                params.append(term.expr)
        subs[k] = Submodel(link_names[k], tuple(params), tuple(splines))

    warnings = []
    if fam.mu_positive and link_names["mu"] != "log":
        warnings.append(f"{link_names['mu']} link does not keep mu positive for family {fam.name}")
    if link_names["sigma"] != "log":
        warnings.append(f"{link_names['sigma']} link does not keep sigma positive")
    return ModelSpec(ast.response.expr, fam.name, subs["mu"], subs["sigma"], formula=text, warnings=tuple(warnings))


def _pos(text, term: Term) -> int:
    """Column of ``term`` in the canonical text."""
    idx = text.find(str(term))
    return idx + 1 if idx >= 0 else 1
