"""Extremization of compiled queries and the end-to-end bounding pipeline.

Perturbation-mode expressions are multilinear over a product of simplices,
so their extrema sit at vertices; we enumerate them all. Exact-mode
expressions are rational functions of (pi, u) and are searched numerically
over the compact domain pi in simplex, u in [0, 1 - delta].
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .contingency import ContingencyTable, build_table, find_zero_rows, marginalize, prune_spurious
from .dataset import Dataset, MissingPolicy, resolve_missing
from .errors import CombinatorialExplosionError, QueryError
from .query import QuerySpec, compile, theoretical_range
from .symbolic import Assignment, Node, ParamSet, Polynomial, SymbolicExpr

TIE_TOL = 1e-12
ATTAIN_TOL = 1e-9


@dataclass(frozen=True)
class BoundOptions:
    random_starts: int = 32
    vertex_limit: int = 10**6
    seed: int = 0
    delta: float = 1e-9
    step_tol: float = 1e-6
    max_polish: int = 512
    max_evals: int = 20_000_000


@dataclass
class BoundsResult:
    lower: float
    upper: float
    arg_lower: Assignment | None
    arg_upper: Assignment | None
    attained: tuple[bool, bool]
    mode: str
    params: ParamSet
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json(self) -> dict:
        def arg(a):
            return {} if a is None else a.to_json(self.params)

        return {
            "mode": self.mode,
            "lower": self.lower,
            "upper": self.upper,
            "attained": list(self.attained),
            "arg_lower": arg(self.arg_lower),
            "arg_upper": arg(self.arg_upper),
            "zero_rows": [r.as_dict() for r in self.params.rows],
            "diagnostics": self.diagnostics,
        }


def _clip(value: float, value_range) -> float:
    if value_range is None:
        return float(value)
    lo, hi = value_range
    return float(min(max(value, lo), hi))


def _constant_result(value: float, params: ParamSet, mode: str, value_range) -> BoundsResult:
    v = _clip(value, value_range)
    return BoundsResult(v, v, None, None, (True, True), mode, params, {"constant": True})


def extremize_perturbation(
    e: Polynomial,
    params: ParamSet,
    opts: BoundOptions | None = None,
    value_range: tuple[float, float] | None = None,
) -> BoundsResult:
    """Exact global min/max of a multilinear polynomial by vertex enumeration."""
    opts = opts or BoundOptions()
    if not isinstance(e, Polynomial):
        raise QueryError("extremize_perturbation needs a perturbation-mode polynomial")
    rows = e.active_rows()
    if not rows:
        return _constant_result(e.constant_term, params, "perturbation", value_range)
    J = params.n_levels
    n_vertices = J ** len(rows)
    if n_vertices > opts.vertex_limit:
        raise CombinatorialExplosionError(
            f"{n_vertices} vertices ({J}^{len(rows)}) exceed the limit {opts.vertex_limit}; "
            "collapse levels or use exact mode"
        )
    values = e.evaluate_vertices(rows, J)
    grid = np.indices((J,) * len(rows)).reshape(len(rows), -1).T

    def vertex(i: int) -> Assignment:
        choice = [0] * params.size
        for pos, k in enumerate(rows):
            choice[k] = int(grid[i, pos])
        return Assignment.vertex(choice, J)

    hi, lo = values.max(), values.min()
    i_hi = int(np.flatnonzero(values >= hi - TIE_TOL)[0])
    i_lo = int(np.flatnonzero(values <= lo + TIE_TOL)[0])
    return BoundsResult(
        _clip(lo, value_range),
        _clip(hi, value_range),
        vertex(i_lo),
        vertex(i_hi),
        (True, True),
        "perturbation",
        params,
        {"vertices": n_vertices, "active_rows": len(rows)},
    )


class _ExactSearch:
    """Multi-start coordinate search over (pi, u) for one exact expression."""

    def __init__(self, e: Node, params: ParamSet, opts: BoundOptions):
        self.fn = e.compiled()
        self.opts = opts
        self.K = params.size
        self.J = params.n_levels
        ks = {s[1] for s in e.symbols()}
        self.active = sorted(ks)
        self.u_max = 1.0 - opts.delta
        self.evals = 0

    def batch(self, pi: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate at M points: pi (M, K, J), u (M, K)."""
        self.evals += pi.shape[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.fn(np.moveaxis(pi, 0, -1), np.moveaxis(u, 0, -1))
        return np.broadcast_to(np.asarray(out, dtype=float), (pi.shape[0],)).copy()

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        A, J = len(self.active), self.J
        masses = (0.0, 0.5, self.u_max)
        n = (J * 3) ** A
        if n > self.opts.vertex_limit:
            raise CombinatorialExplosionError(
                f"{n} exact-mode grid starts exceed the limit {self.opts.vertex_limit}"
            )
        pis, us = [], []
        for choice in itertools.product(range(J), repeat=A):
            for ms in itertools.product(masses, repeat=A):
                pi = np.zeros((self.K, J))
                pi[:, 0] = 1.0
                u = np.zeros(self.K)
                for pos, k in enumerate(self.active):
                    pi[k] = 0.0
                    pi[k, choice[pos]] = 1.0
                    u[k] = ms[pos]
                pis.append(pi)
                us.append(u)
        return np.array(pis), np.array(us)

    def random_points(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        pi = np.zeros((n, self.K, self.J))
        pi[:, :, 0] = 1.0
        u = np.zeros((n, self.K))
        for k in self.active:
            pi[:, k, :] = rng.dirichlet(np.ones(self.J), size=n)
            u[:, k] = rng.uniform(0.0, self.u_max, size=n)
        return pi, u

    def neighbours(self, pi: np.ndarray, u: np.ndarray, h: float):
        cand_pi, cand_u = [], []
        for k in self.active:
            for a in range(self.J):
                d = min(h, pi[k, a])
                if d <= 0:
                    continue
                for b in range(self.J):
                    if b == a:
                        continue
                    p = pi.copy()
                    p[k, a] -= d
                    p[k, b] += d
                    cand_pi.append(p)
                    cand_u.append(u)
            for step in (h, -h):
                v = min(max(u[k] + step, 0.0), self.u_max)
                if v != u[k]:
                    uu = u.copy()
                    uu[k] = v
                    cand_pi.append(pi)
                    cand_u.append(uu)
        return np.array(cand_pi), np.array(cand_u)

    def polish(self, pi: np.ndarray, u: np.ndarray, sign: float) -> tuple[float, np.ndarray, np.ndarray]:
        best = sign * self.batch(pi[None], u[None])[0]
        h = 0.25
        while h >= self.opts.step_tol:
            while True:
                if self.evals > self.opts.max_evals:
                    return best, pi, u
                cp, cu = self.neighbours(pi, u, h)
                if not len(cp):
                    break
                vals = sign * self.batch(cp, cu)
                vals[~np.isfinite(vals)] = -np.inf
                i = int(np.argmax(vals))
                if vals[i] <= best + 1e-15:
                    break
                best, pi, u = vals[i], cp[i], cu[i]
            h /= 2
        return best, pi, u

    def run(self, sign: float, starts_pi, starts_u) -> tuple[float, np.ndarray, np.ndarray, int]:
        best = (-np.inf, None, None)
        polished = 0
        for pi, u in zip(starts_pi, starts_u):
            val, p, uu = self.polish(pi, u, sign)
            polished += 1
            if val > best[0] + ATTAIN_TOL * 1e-3:
                best = (val, p, uu)
            if self.evals > self.opts.max_evals:
                break
        return best[0], best[1], best[2], polished

    def attained(self, value: float, pi: np.ndarray, u: np.ndarray, sign: float) -> bool:
        # an extremum on the u = 1 - delta face is a limit at infinite mass
        # unless pulling the mass back to a finite value costs nothing
        for k in self.active:
            if u[k] >= self.u_max - 1e-15:
                uu = u.copy()
                uu[k] = 1.0 - 1e-4
                if sign * self.batch(pi[None], uu[None])[0] < value - ATTAIN_TOL:
                    return False
        return True


def extremize_exact(
    e: SymbolicExpr,
    params: ParamSet,
    opts: BoundOptions | None = None,
    value_range: tuple[float, float] | None = None,
) -> BoundsResult:
    """Numeric global min/max of an exact-mode expression (not certified)."""
    opts = opts or BoundOptions()
    if not isinstance(e, Node):
        raise QueryError("extremize_exact needs an exact-mode expression")
    if e.is_constant:
        return _constant_result(e.evaluate(Assignment(np.zeros((params.size, params.n_levels)))),
                                params, "exact", value_range)
    search = _ExactSearch(e, params, opts)
    gpi, gu = search.grid()
    rng = np.random.default_rng(opts.seed)
    rpi, ru = search.random_points(rng, opts.random_starts)
    grid_vals = search.batch(gpi, gu)

    outcomes = {}
    for name, sign in (("upper", 1.0), ("lower", -1.0)):
        order = np.argsort(-sign * grid_vals, kind="stable")[: opts.max_polish]
        starts_pi = np.concatenate([gpi[order], rpi])
        starts_u = np.concatenate([gu[order], ru])
        val, pi, u, polished = search.run(sign, starts_pi, starts_u)
        outcomes[name] = (sign * val, Assignment(pi, u), search.attained(val, pi, u, sign), polished)

    lo, arg_lo, att_lo, n_lo = outcomes["lower"]
    hi, arg_hi, att_hi, n_hi = outcomes["upper"]
    exhausted = search.evals > opts.max_evals
    return BoundsResult(
        _clip(lo, value_range),
        _clip(hi, value_range),
        arg_lo,
        arg_hi,
        (bool(att_lo), bool(att_hi)),
        "exact",
        params,
        {
            "certified": False,
            "grid_starts": int(gpi.shape[0]),
            "random_starts": opts.random_starts,
            "polished_starts": n_lo + n_hi,
            "evaluations": int(search.evals),
            "budget_exhausted": bool(exhausted),
        },
    )


def extremize(e: SymbolicExpr, params: ParamSet, opts: BoundOptions | None = None,
              value_range=None) -> BoundsResult:
    if isinstance(e, Polynomial):
        return extremize_perturbation(e, params, opts, value_range)
    return extremize_exact(e, params, opts, value_range)


def query_table(t: ContingencyTable, q: QuerySpec) -> ContingencyTable:
    """Reduce ``t`` to the condition variables the query uses, then prune."""
    wanted = set(q.table_variables)
    missing = wanted - set(t.condition_names)
    if missing:
        raise QueryError(f"variables {sorted(missing)} are not conditions of the table")
    keep = [v for v in t.condition_names if v in wanted]
    if q.kind != "conditional" and tuple(keep) != t.condition_names:
        t = marginalize(t, keep)
    return prune_spurious(t)


def bound_table(
    t: ContingencyTable,
    q: QuerySpec,
    mode: str = "perturbation",
    opts: BoundOptions | None = None,
) -> BoundsResult:
    """Bounds for ``q`` on a contingency table (prunes, compiles, extremizes)."""
    opts = opts or BoundOptions()
    t = query_table(t, q)
    expr, params = compile(t, q, mode)
    result = extremize(expr, params, opts, theoretical_range(t, q))
    diag = {
        "zero_rows": [str(r) for r in find_zero_rows(t)],
        "table_total": t.total,
    }
    if t.pruned_rows:
        diag["pruned_rows"] = [dict(zip(t.condition_names, r)) for r in t.pruned_rows]
    if t.dropped_levels:
        diag["dropped_levels"] = [f"{v}={lv}" for v, lv in t.dropped_levels]
    if q.kind == "conditional":
        fixed = dict(q.conditions)
        hits = [r for r in params.rows if all(r.as_dict()[v] == lv for v, lv in fixed.items())]
        if hits and len(hits) == sum(
            1 for idx in t.rows() if all(t.labels(idx)[t.axis(v)] == lv for v, lv in fixed.items())
        ):
            diag["undefined_ratios"] = [
                f"P({q.outcome} | {', '.join(f'{v}={lv}' for v, lv in q.conditions)}) is 0/0 on row {r}"
                for r in hits
            ]
    result.diagnostics = {**diag, **result.diagnostics}
    return result


def bound_query(
    d: Dataset,
    q: QuerySpec,
    mode: str = "perturbation",
    opts: BoundOptions | None = None,
    policy: MissingPolicy | None = None,
) -> BoundsResult:
    """Full pipeline: resolve missing values, build, prune, compile, extremize."""
    d = resolve_missing(d, policy)
    d.position(q.outcome)
    for v in q.table_variables:
        d.position(v)
    conditions = [v for v in d.names if v in set(q.table_variables)]
    t = build_table(d, conditions, q.outcome)
    return bound_table(t, q, mode, opts)
