"""Command-line front end.

Exit codes: 0 success, 1 I/O or parse error, 2 query/semantic error,
3 resource guard (vertex or fill-in limit).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from collections import defaultdict
from pathlib import Path

from .bounds import BoundOptions, bound_query, bound_table
from .contingency import (
    ContingencyTable,
    build_table,
    collapse_levels,
    find_zero_rows,
    is_gict,
    prune_spurious,
    table_from_json,
)
from .dataset import Dataset, MissingPolicy, load_csv, resolve_missing, support
from .errors import GictError, ParseError, QueryError
from .oracle import check_containment
from .query import QuerySpec, parse_query

SIG_DIGITS = 12


def _round(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        v = float(f"{obj:.{SIG_DIGITS}g}")
        return 0.0 if v == 0 else v
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _emit(payload: dict, fmt: str, out) -> None:
    payload = _round(payload)
    if fmt == "json":
        out.write(json.dumps(payload, indent=2) + "\n")
        return
    for key, value in payload.items():
        if not isinstance(value, str):
            value = json.dumps(value)
        out.write(f"{key}: {value}\n")


def _parse_collapse(specs: list[str]) -> dict[str, dict[str, str]]:
    """``VAR=old1,old2->new`` items, merged per variable."""
    groupings: dict[str, dict[str, str]] = defaultdict(dict)
    for spec in specs or []:
        var, sep, rest = spec.partition("=")
        olds, arrow, new = rest.partition("->")
        if not sep or not arrow or not var.strip() or not new.strip():
            raise ParseError(f"bad --collapse {spec!r}; expected VAR=old1,old2->new")
        for old in olds.split(","):
            if old.strip():
                groupings[var.strip()][old.strip()] = new.strip()
    return dict(groupings)


def _parse_coding(text: str | None) -> dict[str, float] | None:
    if not text:
        return None
    codes = {}
    for item in text.split(","):
        level, sep, value = item.partition("=")
        try:
            codes[level.strip()] = float(value)
        except ValueError:
            raise ParseError(f"bad --coding item {item!r}; expected LEVEL=NUMBER") from None
        if not sep:
            raise ParseError(f"bad --coding item {item!r}; expected LEVEL=NUMBER")
    return codes


def _load(args) -> Dataset | ContingencyTable:
    path = Path(args.input)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json" or raw.lstrip().startswith(b"{"):
        if args.collapse:
            raise ParseError("--collapse needs CSV input")
        return table_from_json(raw)
    markers = set(args.missing.split(",")) if args.missing is not None else {"", "NA"}
    d = load_csv(raw, markers)
    for var, grouping in _parse_collapse(args.collapse).items():
        levels = d.variable(var).levels
        d = collapse_levels(d, var, {lv: grouping.get(lv, lv) for lv in levels})
    return d


def _options(args) -> BoundOptions:
    return BoundOptions(
        random_starts=args.random_starts, vertex_limit=args.vertex_limit, seed=args.seed
    )


def _query(args, kind: str | None = None) -> QuerySpec:
    if not args.query:
        raise QueryError("a query is required (-q)")
    q = parse_query(args.query)
    coding = _parse_coding(args.coding)
    if coding is not None:
        q = QuerySpec(q.kind, q.outcome, q.outcome_level, q.treatment, q.treatment_level,
                      q.contrast, q.conditions, q.adjustment_set, coding)
    if kind == "ate" and q.kind != "ate":
        raise QueryError("the ate subcommand expects an ATE(...) query")
    return q


def _bounds(args, q: QuerySpec) -> dict:
    source = _load(args)
    if isinstance(source, Dataset):
        result = bound_query(source, q, args.mode, _options(args), MissingPolicy.parse(args.missing_policy))
    else:
        result = bound_table(source, q, args.mode, _options(args))
    return {"query": str(q), **result.to_json()}


def cmd_inspect(args) -> dict:
    source = _load(args)
    report: dict = {}
    if isinstance(source, Dataset):
        d = resolve_missing(source, MissingPolicy.parse(args.missing_policy))
        if args.query:
            q = parse_query(args.query)
            outcome = q.outcome
            wanted = set(q.table_variables)
            conditions = [v for v in d.names if v in wanted]
        else:
            outcome = args.outcome or d.names[-1]
            conditions = (
                [c.strip() for c in args.conditions.split(",")]
                if args.conditions
                else [v for v in d.names if v != outcome]
            )
        report["records"] = d.row_count
        report["support"] = {v: list(support(d, v)) for v in d.names}
        table = build_table(d, conditions, outcome)
    else:
        table = source
        report["support"] = {v.name: list(v.levels) for v in table.condition_vars}
        report["support"][table.outcome_var.name] = list(table.outcome_var.levels)
    pruned = prune_spurious(table)
    report["total"] = pruned.total
    report["table"] = [
        {
            "row": dict(zip(pruned.condition_names, pruned.labels(idx))),
            "counts": {lv: pruned.counts[idx + (j,)].item() for j, lv in enumerate(pruned.outcome_var.levels)},
        }
        for idx in pruned.rows()
    ]
    report["pruned"] = [f"{v}={lv}" for v, lv in pruned.dropped_levels]
    report["pruned_rows"] = [dict(zip(table.condition_names, r)) for r in pruned.pruned_rows]
    report["zero_rows"] = [r.as_dict() for r in find_zero_rows(pruned)]
    report["is_gict"] = is_gict(pruned)
    return report


def cmd_bound(args) -> dict:
    return _bounds(args, _query(args))


def cmd_ate(args) -> dict:
    return _bounds(args, _query(args, "ate"))


def cmd_oracle_check(args) -> dict:
    q = _query(args)
    source = _load(args)
    report = check_containment(
        source, q, _options(args), max_count=args.max_count, epsilon=args.epsilon,
        policy=MissingPolicy.parse(args.missing_policy),
    )
    return {"query": str(q), **report.to_json()}


def cmd_collapse(args):
    source = _load(args)
    if not isinstance(source, Dataset):
        raise ParseError("collapse needs CSV input")
    return source.to_csv()


COMMANDS = {
    "inspect": cmd_inspect,
    "bound": cmd_bound,
    "ate": cmd_ate,
    "oracle-check": cmd_oracle_check,
    "collapse": cmd_collapse,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", required=True, help="CSV dataset or JSON raw table")
    common.add_argument("--missing", default=None, help="comma list of missing markers (default: '' and NA)")
    common.add_argument("--missing-policy", default="delete", help="delete | impute:VAR=LEVEL,... | mode")
    common.add_argument("--query", "-q")
    common.add_argument("--mode", choices=("perturbation", "exact"), default="perturbation")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--random-starts", type=int, default=32)
    common.add_argument("--vertex-limit", type=int, default=10**6)
    common.add_argument("--max-count", type=int, default=3)
    common.add_argument("--epsilon", type=float, default=1e-3)
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--collapse", action="append", default=[], help="VAR=old1,old2->new (repeatable)")
    common.add_argument("--coding", help="ATE outcome coding LEVEL=NUMBER,...")
    common.add_argument("--outcome", help="inspect: outcome variable (default: last column)")
    common.add_argument("--conditions", help="inspect: comma list of condition variables")

    parser = argparse.ArgumentParser(
        prog="gictbounds",
        description="Bounds on interventional queries from tables with rows of random zeros.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("inspect", parents=[common], help="show table, support, zero rows")
    sub.add_parser("bound", parents=[common], help="bound a P(...) query")
    sub.add_parser("ate", parents=[common], help="bound an ATE(...) query")
    sub.add_parser("oracle-check", parents=[common], help="brute-force containment check")
    sub.add_parser("collapse", parents=[common], help="print the dataset after --collapse")
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        payload = COMMANDS[args.command](args)
    except GictError as exc:
        err.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return 1
    if isinstance(payload, str):
        out.write(payload)
    else:
        _emit(payload, args.format, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
