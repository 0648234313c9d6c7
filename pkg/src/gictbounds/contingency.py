"""Contingency tables over condition levels x outcome levels.

A table stores a dense count tensor of shape ``I_1 x ... x I_n x J``. Rows
(one per combination of condition levels) can be removed by spurious-zero
pruning; since removal is per combination and not per level, the surviving
rows are tracked as an explicit ``retained`` set of index tuples.
"""

from __future__ import annotations

import itertools
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from .dataset import Dataset, VariableSchema
from .errors import (
    AllSpuriousError,
    ParseError,
    SchemaError,
    UnknownVariableError,
    UnresolvableMissingError,
)

Index = tuple[int, ...]


@dataclass(frozen=True, order=True)
class ZeroRowIndex:
    """A condition-level combination whose outcome cells are all zero."""

    coordinates: tuple[str, ...]
    variables: tuple[str, ...] = field(compare=False, default=())

    def as_dict(self) -> dict[str, str]:
        return dict(zip(self.variables, self.coordinates))

    def __str__(self) -> str:
        return "(" + ", ".join(f"{v}={c}" for v, c in zip(self.variables, self.coordinates)) + ")"


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    condition_vars: tuple[VariableSchema, ...]
    outcome_var: VariableSchema
    counts: np.ndarray
    retained: frozenset[Index] | None = None
    # bookkeeping from prune_spurious; ignored by equality
    pruned_rows: tuple[tuple[str, ...], ...] = ()
    dropped_levels: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        expected = tuple(v.cardinality for v in self.condition_vars) + (
            self.outcome_var.cardinality,
        )
        if counts.shape != expected:
            raise SchemaError(f"count tensor shape {counts.shape} != schema shape {expected}")
        if np.any(counts < 0):
            raise SchemaError("counts must be nonnegative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        names = [v.name for v in self.condition_vars] + [self.outcome_var.name]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate variables in table: {names}")

    def __eq__(self, other):
        if not isinstance(other, ContingencyTable):
            return NotImplemented
        return (
            self.condition_vars == other.condition_vars
            and self.outcome_var == other.outcome_var
            and self.counts.shape == other.counts.shape
            and bool(np.array_equal(self.counts, other.counts))
            and self.retained == other.retained
        )

    __hash__ = None

    @property
    def total(self):
        return self.counts.sum().item()

    @property
    def condition_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.condition_vars)

    @property
    def row_shape(self) -> tuple[int, ...]:
        return self.counts.shape[:-1]

    def axis(self, var: str) -> int:
        try:
            return self.condition_names.index(var)
        except ValueError:
            raise UnknownVariableError(
                f"{var!r} is not a condition variable of this table {list(self.condition_names)}"
            ) from None

    def is_retained(self, idx: Index) -> bool:
        return self.retained is None or idx in self.retained

    def rows(self) -> Iterator[Index]:
        """Retained row indices in lexicographic order."""
        for idx in itertools.product(*(range(n) for n in self.row_shape)):
            if self.is_retained(idx):
                yield idx

    def labels(self, idx: Index) -> tuple[str, ...]:
        return tuple(v.levels[i] for v, i in zip(self.condition_vars, idx))

    def index_of(self, labels: Sequence[str]) -> Index:
        return tuple(v.index(lv) for v, lv in zip(self.condition_vars, labels))

    def row_total(self, idx: Index):
        return self.counts[idx].sum().item()

    def with_counts(self, counts: np.ndarray) -> "ContingencyTable":
        """Same layout, new counts (float counts are allowed for completed tables)."""
        return replace(self, counts=np.asarray(counts))


def build_table(d: Dataset, conditions: Sequence[str], outcome: str) -> ContingencyTable:
    """Count records for every (condition levels, outcome level) cell."""
    conditions = list(conditions)
    if not conditions:
        raise SchemaError("at least one condition variable is required")
    if outcome in conditions:
        raise SchemaError(f"outcome {outcome!r} cannot also be a condition")
    positions = [d.position(v) for v in conditions] + [d.position(outcome)]
    for v in conditions + [outcome]:
        if d.has_missing(v):
            raise UnresolvableMissingError(f"variable {v!r} has unresolved missing values")
    schemas = [d.schema[p] for p in positions]
    lookup = [{lv: i for i, lv in enumerate(s.levels)} for s in schemas]
    counts = np.zeros(tuple(s.cardinality for s in schemas), dtype=np.int64)
    for rec in d.records:
        counts[tuple(lookup[k][rec[p]] for k, p in enumerate(positions))] += 1
    return ContingencyTable(tuple(schemas[:-1]), schemas[-1], counts)


def collapse_levels(d: Dataset, var: str, grouping: Mapping[str, str]) -> Dataset:
    """Relabel the levels of ``var`` by ``grouping`` (level -> group label)."""
    pos = d.position(var)
    schema = d.schema[pos]
    uncovered = [lv for lv in schema.levels if lv not in grouping]
    if uncovered:
        raise SchemaError(f"grouping for {var!r} does not cover levels {uncovered}")
    records = tuple(
        tuple(grouping.get(v, v) if k == pos and isinstance(v, str) else v for k, v in enumerate(rec))
        for rec in d.records
    )
    levels = tuple(sorted(set(grouping[lv] for lv in schema.levels)))
    new_schema = list(d.schema)
    new_schema[pos] = VariableSchema(schema.name, levels)
    return Dataset(tuple(new_schema), records)


def marginalize(t: ContingencyTable, keep: Sequence[str]) -> ContingencyTable:
    """Sum out every condition variable not in ``keep``; axes follow ``keep``'s order.

    Retained-row information is discarded: the result covers the full
    cross product and should be pruned again if needed.
    """
    keep = list(keep)
    axes = [t.axis(v) for v in keep]
    drop = tuple(a for a in range(len(t.condition_vars)) if a not in axes)
    counts = t.counts.sum(axis=drop) if drop else t.counts
    # remaining axes are in original order; permute to keep's order
    remaining = [a for a in range(len(t.condition_vars)) if a not in drop]
    perm = [remaining.index(a) for a in axes] + [len(remaining)]
    counts = np.transpose(counts, perm)
    return ContingencyTable(tuple(t.condition_vars[a] for a in axes), t.outcome_var, counts)


def prune_spurious(t: ContingencyTable) -> ContingencyTable:
    """Delete spurious generalized zeros until a fixed point is reached.

    A block of rows is spurious when, for some variable ``r`` and a fixed
    combination of the other variables' levels, every row over all levels of
    ``r`` is zero. Levels no longer used by any retained row are then removed
    from the schema (listed in ``dropped_levels``).
    """
    n = len(t.condition_vars)
    mass = t.counts.sum(axis=-1)
    retained = set(t.rows())
    deleted: set[Index] = set()

    changed = True
    while changed and retained:
        changed = False
        for r in range(n):
            groups: dict[Index, list[Index]] = defaultdict(list)
            for idx in retained:
                groups[idx[:r] + idx[r + 1:]].append(idx)
            for rows in groups.values():
                if all(mass[idx] == 0 for idx in rows):
                    retained.difference_update(rows)
                    deleted.update(rows)
                    changed = True
        # a level with no mass anywhere is outside the support; with a single
        # condition variable the block rule above cannot see this on its own
        for r in range(n):
            by_level: dict[int, list[Index]] = defaultdict(list)
            for idx in retained:
                by_level[idx[r]].append(idx)
            for rows in by_level.values():
                if all(mass[idx] == 0 for idx in rows):
                    retained.difference_update(rows)
                    deleted.update(rows)
                    changed = True

    if not retained:
        raise AllSpuriousError("every row of the table is a spurious zero")

    used = [sorted({idx[r] for idx in retained}) for r in range(n)]
    dropped = tuple(
        (v.name, lv)
        for r, v in enumerate(t.condition_vars)
        for i, lv in enumerate(v.levels)
        if i not in used[r]
    )
    counts = t.counts
    for r in range(n):
        counts = np.take(counts, used[r], axis=r)
    new_vars = tuple(
        VariableSchema(v.name, tuple(v.levels[i] for i in used[r]), v.numeric_codes)
        for r, v in enumerate(t.condition_vars)
    )
    remap = [{old: new for new, old in enumerate(used[r])} for r in range(n)]
    new_retained = frozenset(tuple(remap[r][i] for r, i in enumerate(idx)) for idx in retained)
    if len(new_retained) == int(np.prod(counts.shape[:-1])):
        new_retained = None
    if not deleted and t.retained is None:
        return t
    return ContingencyTable(
        new_vars,
        t.outcome_var,
        counts,
        new_retained,
        pruned_rows=t.pruned_rows + tuple(sorted(t.labels(idx) for idx in deleted)),
        dropped_levels=t.dropped_levels + dropped,
    )


def find_zero_rows(t: ContingencyTable) -> list[ZeroRowIndex]:
    """Retained rows whose outcome cells are all zero, in lexicographic order."""
    names = t.condition_names
    return [ZeroRowIndex(t.labels(idx), names) for idx in t.rows() if t.row_total(idx) == 0]


def is_gict(t: ContingencyTable) -> bool:
    return bool(find_zero_rows(t))


def _schema_from_json(obj) -> VariableSchema:
    try:
        name = str(obj["name"])
        levels = [str(lv) for lv in obj["levels"]]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad variable description {obj!r}") from exc
    return VariableSchema(name, tuple(sorted(levels)))


def table_from_json(data: str | bytes | Mapping) -> ContingencyTable:
    """Read the raw-table format: variables plus sparse count triples."""
    if not isinstance(data, Mapping):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON table: {exc}") from exc
    try:
        cond = [_schema_from_json(v) for v in data["condition_vars"]]
        outcome = _schema_from_json(data["outcome_var"])
        entries = data["counts"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"raw table is missing field {exc}") from exc
    if not cond:
        raise SchemaError("raw table needs at least one condition variable")
    counts = np.zeros(tuple(v.cardinality for v in cond) + (outcome.cardinality,), dtype=np.int64)
    seen = set()
    for entry in entries:
        try:
            coords = entry["coordinates"]
            if isinstance(coords, Mapping):
                coords = [coords[v.name] for v in cond]
            coords = [str(c) for c in coords]
            level = str(entry["outcome_level"])
            count = entry["count"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad count entry {entry!r}") from exc
        if len(coords) != len(cond):
            raise ParseError(f"entry {entry!r} has {len(coords)} coordinates, expected {len(cond)}")
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise ParseError(f"count must be a nonnegative integer in {entry!r}")
        try:
            cell = tuple(v.index(c) for v, c in zip(cond, coords)) + (outcome.index(level),)
        except ValueError as exc:
            raise ParseError(f"entry {entry!r} uses an undeclared level") from exc
        if cell in seen:
            raise ParseError(f"duplicate entry for cell {coords} / {level}")
        seen.add(cell)
        counts[cell] = count
    return ContingencyTable(tuple(cond), outcome, counts)


def table_to_json(t: ContingencyTable) -> dict:
    entries = []
    for idx in t.rows():
        for j, level in enumerate(t.outcome_var.levels):
            c = t.counts[idx + (j,)].item()
            if c:
                entries.append(
                    {"coordinates": list(t.labels(idx)), "outcome_level": level, "count": c}
                )
    return {
        "condition_vars": [{"name": v.name, "levels": list(v.levels)} for v in t.condition_vars],
        "outcome_var": {"name": t.outcome_var.name, "levels": list(t.outcome_var.levels)},
        "counts": entries,
    }
