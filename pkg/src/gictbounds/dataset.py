"""Categorical datasets: CSV ingestion, schemas and missing-value resolution.

Levels are kept as exact strings and ordered lexicographically; every
tensor built downstream indexes levels in that order.
"""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .errors import (
    EmptyDatasetError,
    ParseError,
    SchemaError,
    UnknownVariableError,
    UnresolvableMissingError,
)

DEFAULT_MISSING_MARKERS = frozenset({"", "NA"})


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


@dataclass(frozen=True)
class VariableSchema:
    name: str
    levels: tuple[str, ...]
    numeric_codes: Mapping[str, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.levels:
            raise SchemaError(f"variable {self.name!r} has no levels")
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"variable {self.name!r} has duplicate levels")
        if self.numeric_codes is not None:
            missing = [lv for lv in self.levels if lv not in self.numeric_codes]
            if missing:
                raise SchemaError(
                    f"numeric codes for {self.name!r} do not cover levels {missing}"
                )

    @property
    def cardinality(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        return self.levels.index(level)


Record = tuple  # one entry per schema variable: a level label or MISSING


@dataclass(frozen=True)
class Dataset:
    schema: tuple[VariableSchema, ...]
    records: tuple[Record, ...]

    @property
    def row_count(self) -> int:
        return len(self.records)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.schema)

    def position(self, var: str) -> int:
        try:
            return self.names.index(var)
        except ValueError:
            raise UnknownVariableError(f"unknown variable {var!r}") from None

    def variable(self, var: str) -> VariableSchema:
        return self.schema[self.position(var)]

    def column(self, var: str) -> list:
        pos = self.position(var)
        return [rec[pos] for rec in self.records]

    def has_missing(self, var: str | None = None) -> bool:
        if var is not None:
            return any(v is MISSING for v in self.column(var))
        return any(v is MISSING for rec in self.records for v in rec)

    def to_csv(self, missing_marker: str = "NA") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names)
        for rec in self.records:
            writer.writerow([missing_marker if v is MISSING else v for v in rec])
        return buf.getvalue()


def _infer_schema(
    names: Sequence[str],
    records: Sequence[Record],
    previous: Sequence[VariableSchema] | None = None,
) -> tuple[VariableSchema, ...]:
    schema = []
    for pos, name in enumerate(names):
        levels = tuple(sorted({rec[pos] for rec in records if rec[pos] is not MISSING}))
        codes = None
        if previous is not None and previous[pos].numeric_codes is not None:
            codes = {lv: previous[pos].numeric_codes[lv] for lv in levels}
        if not levels:
            # an all-missing column is representable before resolution only
            schema.append(_EmptyVariable(name))
        else:
            schema.append(VariableSchema(name, levels, codes))
    return tuple(schema)


class _EmptyVariable(VariableSchema):
    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "levels", ())
        object.__setattr__(self, "numeric_codes", None)


def from_records(
    names: Sequence[str], rows: Iterable[Sequence], missing_markers: Iterable[str] = ()
) -> Dataset:
    """Build a dataset from in-memory rows, inferring levels from the data."""
    names = tuple(names)
    if len(set(names)) != len(names):
        dup = sorted(n for n, c in Counter(names).items() if c > 1)
        raise SchemaError(f"duplicate variable names: {dup}")
    markers = set(missing_markers)
    records = []
    for row in rows:
        if len(row) != len(names):
            raise ParseError(f"row {list(row)} has {len(row)} fields, expected {len(names)}")
        records.append(
            tuple(MISSING if (v is MISSING or str(v) in markers) else str(v) for v in row)
        )
    if not records:
        raise EmptyDatasetError("dataset has no records")
    return Dataset(_infer_schema(names, records), tuple(records))


def load_csv(
    source: IO[bytes] | IO[str] | bytes | str | os.PathLike,
    missing_markers: Iterable[str] = DEFAULT_MISSING_MARKERS,
) -> Dataset:
    """Parse a headed, comma-separated UTF-8 file into a Dataset.

    ``source`` is CSV text, raw bytes, a file object or a filesystem path.

    Fields equal to any of ``missing_markers`` become ``MISSING``. Ragged
    rows raise ``ParseError`` naming the 1-based line number.
    """
    if isinstance(source, os.PathLike):
        with open(source, "rb") as fh:
            text = fh.read().decode("utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise EmptyDatasetError("no header line")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if len(set(header)) != len(header):
        dup = sorted(n for n, c in Counter(header).items() if c > 1)
        raise SchemaError(f"duplicate header names: {dup}")
    markers = set(missing_markers)
    records = []
    for lineno, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise ParseError(
                f"line {lineno}: expected {len(header)} fields, found {len(fields)}"
            )
        records.append(tuple(MISSING if f.strip() in markers else f.strip() for f in fields))
    if not records:
        raise EmptyDatasetError("dataset has a header but no data lines")
    return Dataset(_infer_schema(header, records), tuple(records))


@dataclass(frozen=True)
class MissingPolicy:
    """How to remove MISSING values before tables are built.

    ``kind`` is one of ``delete_rows``, ``impute_constant`` or ``impute_mode``.
    ``constants`` maps variable name to the level imputed under
    ``impute_constant``.
    """

    kind: str = "delete_rows"
    constants: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("delete_rows", "impute_constant", "impute_mode"):
            raise UnresolvableMissingError(f"unknown missing policy {self.kind!r}")

    @classmethod
    def delete_rows(cls) -> "MissingPolicy":
        return cls("delete_rows")

    @classmethod
    def impute_constant(cls, constants: Mapping[str, str]) -> "MissingPolicy":
        return cls("impute_constant", dict(constants))

    @classmethod
    def impute_mode(cls) -> "MissingPolicy":
        return cls("impute_mode")

    @classmethod
    def parse(cls, text: str) -> "MissingPolicy":
        """Parse ``delete``, ``mode`` or ``impute:VAR=LEVEL[,VAR=LEVEL...]``."""
        text = text.strip()
        if text in ("delete", "delete_rows"):
            return cls.delete_rows()
        if text in ("mode", "impute_mode"):
            return cls.impute_mode()
        if text.startswith("impute:"):
            constants = {}
            for item in text[len("impute:"):].split(","):
                var, sep, level = item.partition("=")
                if not sep or not var.strip():
                    raise ParseError(f"bad impute item {item!r}; expected VAR=LEVEL")
                constants[var.strip()] = level.strip()
            return cls.impute_constant(constants)
        raise ParseError(f"unknown missing policy {text!r}")


def resolve_missing(d: Dataset, policy: MissingPolicy | None = None) -> Dataset:
    """Return a dataset without MISSING values; levels are recomputed."""
    policy = policy or MissingPolicy.delete_rows()
    if not d.has_missing():
        return d
    names = d.names
    if policy.kind == "delete_rows":
        records = [rec for rec in d.records if not any(v is MISSING for v in rec)]
        if not records:
            raise UnresolvableMissingError("every record contains a missing value")
    else:
        fill: dict[int, str] = {}
        for pos, var in enumerate(d.schema):
            if not any(rec[pos] is MISSING for rec in d.records):
                continue
            if policy.kind == "impute_constant":
                if var.name not in policy.constants:
                    raise UnresolvableMissingError(
                        f"variable {var.name!r} has missing values but no imputed level"
                    )
                level = policy.constants[var.name]
                if level not in var.levels:
                    raise UnresolvableMissingError(
                        f"imputed level {level!r} is not a level of {var.name!r} {list(var.levels)}"
                    )
                fill[pos] = level
            else:
                counts = Counter(rec[pos] for rec in d.records if rec[pos] is not MISSING)
                if not counts:
                    raise UnresolvableMissingError(
                        f"variable {var.name!r} has no observed values to take the mode of"
                    )
                top = max(counts.values())
                fill[pos] = min(lv for lv, c in counts.items() if c == top)
        for name in policy.constants:
            d.position(name)
        records = [
            tuple(fill[pos] if v is MISSING else v for pos, v in enumerate(rec))
            for rec in d.records
        ]
    return Dataset(_infer_schema(names, records, d.schema), tuple(records))


def support(d: Dataset, var: str) -> tuple[str, ...]:
    """Sorted distinct observed levels of ``var``."""
    if d.has_missing(var):
        raise UnresolvableMissingError(
            f"variable {var!r} still has missing values; resolve them first"
        )
    return tuple(sorted(set(d.column(var))))


def with_numeric_codes(d: Dataset, var: str, codes: Mapping[str, float]) -> Dataset:
    pos = d.position(var)
    old = d.schema[pos]
    schema = list(d.schema)
    schema[pos] = VariableSchema(old.name, old.levels, {lv: float(codes[lv]) for lv in codes})
    return Dataset(tuple(schema), d.records)
