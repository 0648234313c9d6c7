"""Brute-force verification of reported bounds.

Zero rows are filled with concrete counts, the query is evaluated on the
completed table with the plain plug-in estimator, and every value is checked
against the bounds. Nothing here touches the symbolic compiler.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .bounds import BoundOptions, bound_table, query_table
from .contingency import ContingencyTable, ZeroRowIndex, build_table, find_zero_rows
from .dataset import Dataset, MissingPolicy, resolve_missing
from .errors import CombinatorialExplosionError, ConstraintError
from .query import QuerySpec, plug_in

FillIn = tuple[tuple[float, ...], ...]

EXACT_TOL = 1e-6


def count_fillins(n_rows: int, n_levels: int, max_count: int) -> int:
    return ((max_count + 1) ** n_levels - 1) ** n_rows


def enumerate_fillins(
    rows: Sequence[ZeroRowIndex], n_levels: int, max_count: int
) -> Iterator[FillIn]:
    """Every per-row count vector in {0..max_count}^J with a positive total.

    Rows vary slowest-first, each row's vector in lexicographic order.
    """
    if max_count < 1:
        raise ConstraintError("max_count must be at least 1")
    per_row = [v for v in itertools.product(range(max_count + 1), repeat=n_levels) if any(v)]
    yield from itertools.product(per_row, repeat=len(rows))


def complete_table(t: ContingencyTable, f: FillIn) -> ContingencyTable:
    rows = find_zero_rows(t)
    if len(f) != len(rows):
        raise ConstraintError(f"fill-in covers {len(f)} rows, table has {len(rows)} zero rows")
    counts = np.array(t.counts, dtype=float)
    for row, x in zip(rows, f):
        counts[t.index_of(row.coordinates)] = x
    return t.with_counts(counts)


def exact_value(t: ContingencyTable, f: FillIn, q: QuerySpec) -> float:
    """Query value on ``t`` with its zero rows replaced by ``f``."""
    return plug_in(complete_table(t, f), q)


@dataclass
class ContainmentReport:
    bounds: dict
    fillins_checked: int = 0
    observed_min: float | None = None
    observed_max: float | None = None
    rescaled_min: float | None = None
    rescaled_max: float | None = None
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "violations": self.violations,
            "observed_min": self.observed_min,
            "observed_max": self.observed_max,
            "rescaled_min": self.rescaled_min,
            "rescaled_max": self.rescaled_max,
            "bounds": self.bounds,
            "fillins_checked": self.fillins_checked,
        }


def check_containment(
    source: Dataset | ContingencyTable,
    q: QuerySpec,
    opts: BoundOptions | None = None,
    max_count: int = 3,
    epsilon: float = 1e-3,
    policy: MissingPolicy | None = None,
) -> ContainmentReport:
    """Check every integer fill-in against exact bounds, and every
    fill-in rescaled to total mass ``epsilon * N`` against perturbation bounds.
    """
    opts = opts or BoundOptions()
    if isinstance(source, Dataset):
        d = resolve_missing(source, policy)
        conditions = [v for v in d.names if v in set(q.table_variables)]
        t = build_table(d, conditions, q.outcome)
    else:
        t = source
    t = query_table(t, q)
    exact = bound_table(t, q, "exact", opts)
    pert = bound_table(t, q, "perturbation", opts)
    report = ContainmentReport(
        bounds={
            "exact": {"lower": exact.lower, "upper": exact.upper},
            "perturbation": {"lower": pert.lower, "upper": pert.upper},
        }
    )
    rows = find_zero_rows(t)
    J = t.outcome_var.cardinality
    n = count_fillins(len(rows), J, max_count)
    if n > opts.vertex_limit:
        raise CombinatorialExplosionError(f"{n} fill-ins exceed the limit {opts.vertex_limit}")
    if not rows:
        v = plug_in(t, q)
        report.observed_min = report.observed_max = v
        report.rescaled_min = report.rescaled_max = v
        return report

    N = float(t.total)
    slack = 10 * epsilon
    values, rescaled = [], []
    for f in enumerate_fillins(rows, J, max_count):
        v = exact_value(t, f, q)
        values.append(v)
        if not exact.lower - EXACT_TOL <= v <= exact.upper + EXACT_TOL:
            report.violations.append({"check": "exact", "fillin": [list(x) for x in f], "value": v})
        scale = epsilon * N / sum(sum(x) for x in f)
        small = tuple(tuple(c * scale for c in x) for x in f)
        w = exact_value(t, small, q)
        rescaled.append(w)
        if not pert.lower - slack <= w <= pert.upper + slack:
            report.violations.append(
                {"check": "perturbation", "fillin": [list(x) for x in f], "scale": scale, "value": w}
            )
    report.fillins_checked = len(values)
    report.observed_min, report.observed_max = min(values), max(values)
    report.rescaled_min, report.rescaled_max = min(rescaled), max(rescaled)
    return report
