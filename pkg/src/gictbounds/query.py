"""Queries and their compilation into symbolic expressions.

Three kinds are supported:

* conditional      P(Y=y | X1=a, ...)
* interventional   P(Y=y | do(X=x)) identified by backdoor adjustment,
                   sum_z P(Y=y | X=x, Z=z) P(Z=z)
* ate              sum_y code(y) [P(y | do(X=hi)) - P(y | do(X=lo))]

Each zero row of the table becomes a probability vector ``pi[k]`` over the
outcome levels; in exact mode it also gets an unknown mass.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .contingency import ContingencyTable, find_zero_rows, is_gict, marginalize, prune_spurious
from .errors import (
    CodingError,
    MustUseBoundsError,
    ParseError,
    QueryError,
    SpuriousLevelError,
    UndefinedProbabilityError,
    UnknownVariableError,
)
from .symbolic import Assignment, ParamSet, Polynomial, Pi, Quot, SymbolicExpr, as_node, mass, node_sum

MODES = ("perturbation", "exact")


@dataclass(frozen=True)
class QuerySpec:
    kind: str
    outcome: str
    outcome_level: str | None = None
    treatment: str | None = None
    treatment_level: str | None = None
    contrast: tuple[str, str] | None = None  # (hi, lo) for ate
    conditions: tuple[tuple[str, str], ...] = ()
    adjustment_set: tuple[str, ...] = ()
    coding: Mapping[str, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("conditional", "interventional", "ate"):
            raise QueryError(f"unknown query kind {self.kind!r}")
        if self.kind == "conditional":
            names = [v for v, _ in self.conditions]
            if not names:
                raise QueryError("conditional query needs at least one condition")
            if self.outcome in names or len(set(names)) != len(names):
                raise QueryError("conditions must be distinct and exclude the outcome")
        else:
            if self.treatment is None:
                raise QueryError(f"{self.kind} query needs a treatment variable")
            if self.treatment in self.adjustment_set or self.outcome in self.adjustment_set:
                raise QueryError("adjustment set must exclude treatment and outcome")
            if self.treatment == self.outcome:
                raise QueryError("treatment and outcome must differ")
            if len(set(self.adjustment_set)) != len(self.adjustment_set):
                raise QueryError("adjustment set has duplicates")

    @classmethod
    def conditional_query(cls, outcome: str, level: str, conditions: Mapping[str, str]) -> "QuerySpec":
        return cls("conditional", outcome, str(level), conditions=tuple((k, str(v)) for k, v in conditions.items()))

    @classmethod
    def interventional(cls, outcome: str, level: str, treatment: str, treatment_level: str,
                       adjustment_set: Sequence[str] = ()) -> "QuerySpec":
        return cls("interventional", outcome, str(level), treatment, str(treatment_level),
                   adjustment_set=tuple(adjustment_set))

    @classmethod
    def ate(cls, outcome: str, treatment: str, hi: str, lo: str,
            adjustment_set: Sequence[str] = (), coding: Mapping[str, float] | None = None) -> "QuerySpec":
        return cls("ate", outcome, None, treatment, None, (str(hi), str(lo)),
                   adjustment_set=tuple(adjustment_set), coding=coding)

    @property
    def table_variables(self) -> tuple[str, ...]:
        """Condition variables the query's table must have (unordered)."""
        if self.kind == "conditional":
            return tuple(v for v, _ in self.conditions)
        return tuple(self.adjustment_set) + (self.treatment,)

    def with_outcome_level(self, level: str) -> "QuerySpec":
        return QuerySpec(self.kind, self.outcome, level, self.treatment, self.treatment_level,
                         self.contrast, self.conditions, self.adjustment_set, self.coding)

    def __str__(self) -> str:
        return format_query(self)


_NAME = r"[^\s=|;,:()]+"
_LEVEL = r"[^\s|;,:()]+"
_P_RE = re.compile(rf"^\s*P\(\s*({_NAME})\s*=\s*({_LEVEL})\s*\|\s*(.*)\)\s*$")
_DO_RE = re.compile(rf"^do\(\s*({_NAME})\s*=\s*({_LEVEL})\s*\)\s*(?:;\s*adjust\s*=\s*(.*?))?\s*$")
_ATE_RE = re.compile(
    rf"^\s*ATE\(\s*({_NAME})\s*;\s*({_NAME})\s*:\s*({_LEVEL})\s+vs\s+({_LEVEL})\s*"
    rf"(?:;\s*adjust\s*=\s*(.*?))?\s*\)\s*$"
)


def _names(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(p.strip() for p in text.split(",") if p.strip())


def parse_query(text: str) -> QuerySpec:
    """Parse the query mini-language.

    >>> parse_query("P(O=1 | do(H=0); adjust=A)").kind
    'interventional'
    >>> parse_query("ATE(O; H: 1 vs 0; adjust=A)").contrast
    ('1', '0')
    """
    m = _ATE_RE.match(text)
    if m:
        outcome, treatment, hi, lo, adjust = m.groups()
        return QuerySpec.ate(outcome, treatment, hi, lo, _names(adjust))
    m = _P_RE.match(text)
    if not m:
        raise ParseError(f"cannot parse query {text!r}")
    outcome, level, rest = m.groups()
    rest = rest.strip()
    d = _DO_RE.match(rest)
    if d:
        treatment, tlevel, adjust = d.groups()
        return QuerySpec.interventional(outcome, level, treatment, tlevel, _names(adjust))
    if rest.startswith("do("):
        raise ParseError(f"cannot parse intervention in {text!r}")
    conditions = {}
    for item in rest.split(","):
        var, sep, lv = item.partition("=")
        if not sep or not var.strip() or not lv.strip():
            raise ParseError(f"bad condition {item.strip()!r} in {text!r}")
        conditions[var.strip()] = lv.strip()
    return QuerySpec.conditional_query(outcome, level, conditions)


def format_query(q: QuerySpec) -> str:
    adjust = f"; adjust={','.join(q.adjustment_set)}" if q.adjustment_set else ""
    if q.kind == "ate":
        return f"ATE({q.outcome}; {q.treatment}: {q.contrast[0]} vs {q.contrast[1]}{adjust})"
    if q.kind == "interventional":
        return f"P({q.outcome}={q.outcome_level} | do({q.treatment}={q.treatment_level}){adjust})"
    conds = ", ".join(f"{v}={lv}" for v, lv in q.conditions)
    return f"P({q.outcome}={q.outcome_level} | {conds})"


def outcome_codes(t: ContingencyTable, q: QuerySpec) -> dict[str, float]:
    levels = t.outcome_var.levels
    source = q.coding or t.outcome_var.numeric_codes
    if source is not None:
        missing = [lv for lv in levels if lv not in source]
        if missing:
            raise CodingError(f"coding map does not cover outcome levels {missing}")
        return {lv: float(source[lv]) for lv in levels}
    try:
        return {lv: float(lv) for lv in levels}
    except ValueError:
        raise CodingError(
            f"outcome {t.outcome_var.name!r} has non-numeric levels {list(levels)}; supply a coding map"
        ) from None


def theoretical_range(t: ContingencyTable, q: QuerySpec) -> tuple[float, float]:
    if q.kind != "ate":
        return 0.0, 1.0
    codes = outcome_codes(t, q).values()
    spread = max(codes) - min(codes)
    return -spread, spread


def _check_levels(t: ContingencyTable, q: QuerySpec) -> None:
    if q.outcome != t.outcome_var.name:
        raise UnknownVariableError(f"query outcome {q.outcome!r} is not the table outcome {t.outcome_var.name!r}")

    def need(var: str, level: str | None):
        schema = t.outcome_var if var == t.outcome_var.name else t.condition_vars[t.axis(var)]
        if level is not None and level not in schema.levels:
            raise SpuriousLevelError(
                f"level {var}={level} is outside the support {list(schema.levels)}"
            )

    need(q.outcome, q.outcome_level)
    for v, lv in q.conditions:
        need(v, lv)
    if q.kind != "conditional":
        for v in q.adjustment_set:
            t.axis(v)
        need(q.treatment, q.treatment_level)
        if q.contrast:
            need(q.treatment, q.contrast[0])
            need(q.treatment, q.contrast[1])


class _Builder:
    """Shared state for compiling one query against one table."""

    def __init__(self, t: ContingencyTable, mode: str):
        if mode not in MODES:
            raise QueryError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.t = t
        self.mode = mode
        self.exact = mode == "exact"
        self.zero_rows = find_zero_rows(t)
        self.zidx = {t.index_of(r.coordinates): k for k, r in enumerate(self.zero_rows)}
        self.N = float(t.total)
        self.params = ParamSet(tuple(self.zero_rows), t.outcome_var.levels, exact=self.exact)
        if self.exact:
            self.masses = {k: mass(k, self.N) for k in range(len(self.zero_rows))}
            self.grand_total = node_sum([self.N] + list(self.masses.values()))

    def const(self, value: float) -> SymbolicExpr:
        return as_node(value) if self.exact else Polynomial.constant(value)

    def pi(self, k: int, l: int) -> SymbolicExpr:
        return Pi(k, l) if self.exact else Polynomial.symbol(k, l)

    def interventional(self, treatment: str, x: str, y: str) -> SymbolicExpr:
        t = self.t
        ax = t.axis(treatment)
        xi = t.condition_vars[ax].index(x)
        yi = t.outcome_var.index(y)
        shape = t.row_shape
        other = [range(n) for a, n in enumerate(shape) if a != ax]
        terms = []
        for z in itertools.product(*other):
            stratum = [z[:ax] + (i,) + z[ax:] for i in range(shape[ax])]
            n_z = sum(t.row_total(r) for r in stratum)
            zeros = [self.zidx[r] for r in stratum if r in self.zidx]
            if n_z == 0 and not zeros:
                continue
            row = z[:ax] + (xi,) + z[ax:]
            if not t.is_retained(row):
                if n_z > 0:
                    raise QueryError(
                        f"row {dict(zip(t.condition_names, t.labels(row)))} was pruned as spurious "
                        "but its stratum has positive weight"
                    )
                continue
            if row in self.zidx:
                factor = self.pi(self.zidx[row], yi)
            else:
                factor = self.const(t.counts[row + (yi,)].item() / t.row_total(row))
            if self.exact:
                weight = node_sum([float(n_z)] + [self.masses[k] for k in zeros]) / self.grand_total
                terms.append(as_node(factor) * weight)
            else:
                terms.append(factor * (n_z / self.N))
        if self.exact:
            return node_sum(terms)
        return sum(terms, Polynomial())

    def conditional(self, conditions: Sequence[tuple[str, str]], y: str) -> SymbolicExpr:
        t = self.t
        fixed = {t.axis(v): t.condition_vars[t.axis(v)].index(lv) for v, lv in conditions}
        yi = t.outcome_var.index(y)
        matched = [r for r in t.rows() if all(r[a] == i for a, i in fixed.items())]
        den = sum(t.row_total(r) for r in matched)
        num = sum(t.counts[r + (yi,)].item() for r in matched)
        zeros = [self.zidx[r] for r in matched if r in self.zidx]
        label = ", ".join(f"{v}={lv}" for v, lv in conditions)
        if not matched or (den == 0 and not zeros):
            raise UndefinedProbabilityError(f"P({t.outcome_var.name} | {label}) has no retained rows")
        if den == 0:
            if len(zeros) > 1:
                raise QueryError(
                    f"P({t.outcome_var.name} | {label}) spans several unobserved rows; "
                    "condition on every table variable instead"
                )
            return self.pi(zeros[0], yi)
        if not self.exact or not zeros:
            return self.const(num / den)
        numer = node_sum([float(num)] + [self.masses[k] * Pi(k, yi) for k in zeros])
        denom = node_sum([float(den)] + [self.masses[k] for k in zeros])
        return Quot(numer, denom)


def compile(t: ContingencyTable, q: QuerySpec, mode: str = "perturbation") -> tuple[SymbolicExpr, ParamSet]:
    """Compile ``q`` on the (pruned) table ``t`` into an expression and its unknowns."""
    _check_levels(t, q)
    if q.kind != "conditional" and set(q.table_variables) != set(t.condition_names):
        raise QueryError(
            f"table conditions {list(t.condition_names)} must equal adjustment set + treatment "
            f"{list(q.table_variables)}"
        )
    b = _Builder(t, mode)
    if q.kind == "conditional":
        return b.conditional(q.conditions, q.outcome_level), b.params
    if q.kind == "interventional":
        return b.interventional(q.treatment, q.treatment_level, q.outcome_level), b.params
    codes = outcome_codes(t, q)
    hi, lo = q.contrast
    parts = []
    for y, c in codes.items():
        if c == 0:
            continue
        diff = b.interventional(q.treatment, hi, y) - b.interventional(q.treatment, lo, y)
        parts.append(diff * c)
    if b.exact:
        return node_sum(parts), b.params
    return sum(parts, Polynomial()), b.params


def compile_distribution(t: ContingencyTable, q: QuerySpec, mode: str = "perturbation") -> tuple[dict[str, SymbolicExpr], ParamSet]:
    """Compile ``q`` once per outcome level (conditional / interventional only)."""
    if q.kind == "ate":
        raise QueryError("an ATE has no outcome distribution")
    out, params = {}, None
    for level in t.outcome_var.levels:
        out[level], params = compile(t, q.with_outcome_level(level), mode)
    return out, params


def evaluate(e: SymbolicExpr, a: Assignment, params: ParamSet | None = None) -> float:
    """Numeric value of ``e`` at a feasible assignment."""
    return e.evaluate(a, params)


def _table_for(t: ContingencyTable, q: QuerySpec) -> ContingencyTable:
    needed = [v for v in t.condition_names if v in set(q.table_variables)]
    missing = set(q.table_variables) - set(needed)
    if missing:
        raise UnknownVariableError(f"variables {sorted(missing)} are not in the table")
    if q.kind == "conditional" or tuple(needed) == t.condition_names:
        return t
    return prune_spurious(marginalize(t, needed))


def plug_in(t: ContingencyTable, q: QuerySpec) -> float:
    """Point estimate on a table with no relevant zero rows.

    Computed directly from the count tensor, independently of ``compile``.
    """
    t = _table_for(t, q)
    _check_levels(t, q)
    if is_gict(t):
        raise MustUseBoundsError(
            "table has generalized zero rows " + ", ".join(str(r) for r in find_zero_rows(t))
            + "; use bounds instead of a point estimate"
        )
    counts = np.asarray(t.counts, dtype=float)
    levels = t.outcome_var.levels
    if q.kind == "conditional":
        sel = [slice(None)] * len(t.condition_vars)
        for v, lv in q.conditions:
            ax = t.axis(v)
            sel[ax] = t.condition_vars[ax].index(lv)
        dist = counts[tuple(sel)].reshape(-1, len(levels)).sum(axis=0)
        if dist.sum() == 0:
            raise UndefinedProbabilityError(f"{format_query(q)} conditions on an empty row")
        return float(dist[levels.index(q.outcome_level)] / dist.sum())

    def do(x: str) -> np.ndarray:
        ax = t.axis(q.treatment)
        c = np.moveaxis(counts, ax, 0)
        n_xz = c[t.condition_vars[ax].index(x)]
        n_z = c.sum(axis=0).sum(axis=-1)
        row = n_xz.sum(axis=-1)
        live = n_z > 0
        if np.any(row[live] == 0):
            raise UndefinedProbabilityError(f"P({q.outcome} | {q.treatment}={x}, ...) has an empty stratum")
        probs = n_xz[live] / row[live][:, None]
        return (probs * (n_z[live] / n_z.sum())[:, None]).sum(axis=0)

    if q.kind == "interventional":
        return float(do(q.treatment_level)[levels.index(q.outcome_level)])
    codes = np.array([outcome_codes(t, q)[lv] for lv in levels])
    hi, lo = q.contrast
    return float(codes @ (do(hi) - do(lo)))
