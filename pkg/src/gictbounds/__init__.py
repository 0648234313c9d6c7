"""Bounds on interventional queries and ATEs from contingency tables that
contain whole rows of random zeros."""

from .bounds import BoundOptions, BoundsResult, bound_query, bound_table, extremize_exact, extremize_perturbation
from .contingency import (
    ContingencyTable,
    ZeroRowIndex,
    build_table,
    collapse_levels,
    find_zero_rows,
    is_gict,
    marginalize,
    prune_spurious,
    table_from_json,
)
from .dataset import MISSING, Dataset, MissingPolicy, VariableSchema, load_csv, resolve_missing, support
from .oracle import check_containment, enumerate_fillins, exact_value
from .query import QuerySpec, compile, compile_distribution, evaluate, parse_query, plug_in
from .symbolic import Assignment, ParamSet, Polynomial

__version__ = "0.1.0"

__all__ = [
    "BoundOptions",
    "BoundsResult",
    "bound_query",
    "bound_table",
    "extremize_exact",
    "extremize_perturbation",
    "ContingencyTable",
    "ZeroRowIndex",
    "build_table",
    "collapse_levels",
    "find_zero_rows",
    "is_gict",
    "marginalize",
    "prune_spurious",
    "table_from_json",
    "MISSING",
    "Dataset",
    "MissingPolicy",
    "VariableSchema",
    "load_csv",
    "resolve_missing",
    "support",
    "check_containment",
    "enumerate_fillins",
    "exact_value",
    "QuerySpec",
    "compile",
    "compile_distribution",
    "evaluate",
    "parse_query",
    "plug_in",
    "Assignment",
    "ParamSet",
    "Polynomial",
]
