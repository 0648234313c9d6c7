"""Symbolic query expressions over unknown-row parameters.

Two payloads exist:

* ``Polynomial``: multilinear polynomial in the symbols ``pi[k][l]`` (the
  outcome distribution of zero row ``k``), stored as a monomial -> coefficient
  map. Used in perturbation mode, where unknown masses are negligible.
* ``Node`` trees: rational functions of ``pi[k][l]`` and ``u[k]``, where
  ``u[k]`` in [0, 1) is the compactified mass of row ``k``
  (mass = N * u / (1 - u)). Used in exact mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .contingency import ZeroRowIndex
from .errors import ConstraintError, QueryError

Symbol = tuple[int, int]  # (zero row k, outcome level index l)
Monomial = frozenset  # frozenset[Symbol]

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ParamSet:
    """The unknowns of a compiled query: one simplex block (and mass) per zero row."""

    rows: tuple[ZeroRowIndex, ...]
    outcome_levels: tuple[str, ...]
    exact: bool = False

    @property
    def size(self) -> int:
        return len(self.rows)

    @property
    def n_levels(self) -> int:
        return len(self.outcome_levels)


@dataclass(frozen=True, eq=False)
class Assignment:
    """Numeric values for a ParamSet: ``pi`` has shape (K, J), ``u`` shape (K,)."""

    pi: np.ndarray
    u: np.ndarray | None = None

    @classmethod
    def vertex(cls, choice: Sequence[int], n_levels: int, u=None) -> "Assignment":
        pi = np.zeros((len(choice), n_levels))
        for k, l in enumerate(choice):
            pi[k, l] = 1.0
        return cls(pi, None if u is None else np.asarray(u, dtype=float))

    def check(self, params: ParamSet, need_u: bool) -> None:
        pi = np.asarray(self.pi, dtype=float)
        if pi.shape != (params.size, params.n_levels):
            raise ConstraintError(
                f"pi has shape {pi.shape}, expected {(params.size, params.n_levels)}"
            )
        if pi.size and (np.any(pi < -SIMPLEX_TOL) or np.any(np.abs(pi.sum(axis=1) - 1) > SIMPLEX_TOL)):
            raise ConstraintError("pi rows must be probability vectors")
        if need_u:
            if self.u is None or np.shape(self.u) != (params.size,):
                raise ConstraintError("exact-mode assignment needs one mass coordinate per row")
            u = np.asarray(self.u, dtype=float)
            if np.any(u < 0) or np.any(u >= 1):
                raise ConstraintError("mass coordinates must lie in [0, 1)")

    def to_json(self, params: ParamSet) -> dict:
        out = {}
        for k, row in enumerate(params.rows):
            key = str(row)
            pi = [float(p) for p in self.pi[k]]
            if self.u is None:
                # vertex description when pi is a basis vector
                hot = [l for l, p in enumerate(pi) if p == 1.0]
                out[key] = params.outcome_levels[hot[0]] if len(hot) == 1 else pi
            else:
                out[key] = {"pi": pi, "u": float(self.u[k])}
        return out


class Polynomial:
    """Multilinear polynomial in the pi symbols.

    Monomials are frozensets of ``(k, l)`` symbols with at most one symbol
    per zero row ``k``; the empty frozenset is the constant term.
    """

    __slots__ = ("terms",)
    mode = "perturbation"

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        clean = {}
        for mono, coef in (terms or {}).items():
            mono = frozenset(mono)
            if len({k for k, _ in mono}) != len(mono):
                raise QueryError(f"monomial {sorted(mono)} is not multilinear")
            if coef != 0:
                clean[mono] = clean.get(mono, 0.0) + float(coef)
        self.terms = {m: c for m, c in clean.items() if c != 0}

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls({frozenset(): value})

    @classmethod
    def symbol(cls, k: int, l: int) -> "Polynomial":
        return cls({frozenset({(k, l)}): 1.0})

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial({m: c * float(other) for m, c in self.terms.items()})
        terms: dict[Monomial, float] = {}
        for (m1, c1), (m2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            rows1 = {k for k, _ in m1}
            if any(k in rows1 for k, _ in m2):
                raise QueryError("product would square a zero-row parameter")
            m = m1 | m2
            terms[m] = terms.get(m, 0.0) + c1 * c2
        return Polynomial(terms)

    __rmul__ = __mul__

    @property
    def is_constant(self) -> bool:
        return all(not m for m in self.terms)

    @property
    def constant_term(self) -> float:
        return self.terms.get(frozenset(), 0.0)

    def is_multilinear(self) -> bool:
        return all(len({k for k, _ in m}) == len(m) for m in self.terms)

    def active_rows(self) -> list[int]:
        return sorted({k for m in self.terms for k, _ in m})

    def evaluate_pi(self, pi) -> float:
        total = 0.0
        for mono, coef in self.terms.items():
            term = coef
            for k, l in mono:
                term *= pi[k][l]
            total += term
        return total

    def evaluate(self, a: Assignment, params: ParamSet | None = None) -> float:
        if params is not None:
            a.check(params, need_u=False)
        return self.evaluate_pi(np.asarray(a.pi, dtype=float))

    def evaluate_vertices(self, rows: Sequence[int], n_levels: int) -> np.ndarray:
        """Values at every vertex of the product of simplices over ``rows``.

        Vertex ``v`` assigns level ``grid[v, i]`` to row ``rows[i]``; vertices
        are enumerated in lexicographic order of those level tuples.
        """
        pos = {k: i for i, k in enumerate(rows)}
        grid = np.indices((n_levels,) * len(rows)).reshape(len(rows), -1).T
        values = np.zeros(grid.shape[0])
        for mono, coef in self.terms.items():
            mask = np.ones(grid.shape[0], dtype=bool)
            for k, l in mono:
                mask &= grid[:, pos[k]] == l
            values[mask] += coef
        return values

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for mono, coef in sorted(self.terms.items(), key=lambda mc: sorted(mc[0])):
            syms = "*".join(f"pi[{k}][{l}]" for k, l in sorted(mono))
            parts.append(f"{coef:.6g}" + (f"*{syms}" if syms else ""))
        return " + ".join(parts)


# --- exact-mode expression trees -------------------------------------------


class Node:
    mode = "exact"

    def __add__(self, other):
        return Sum((self, as_node(other)))

    def __radd__(self, other):
        return Sum((as_node(other), self))

    def __mul__(self, other):
        return Prod((self, as_node(other)))

    def __rmul__(self, other):
        return Prod((as_node(other), self))

    def __truediv__(self, other):
        return Quot(self, as_node(other))

    def __sub__(self, other):
        return Sum((self, Prod((Const(-1.0), as_node(other)))))

    def source(self) -> str:
        raise NotImplementedError

    def symbols(self) -> set:
        raise NotImplementedError

    def compiled(self) -> Callable:
        fn = self.__dict__.get("_fn")
        if fn is None:
            # source is generated from this tree only: constants, pi[k][l], u[k]
            fn = eval("lambda pi, u: " + self.source(), {"__builtins__": {}})
            self.__dict__["_fn"] = fn
        return fn

    def evaluate(self, a: Assignment, params: ParamSet | None = None) -> float:
        if params is not None:
            a.check(params, need_u=True)
        u = a.u if a.u is not None else np.zeros(len(a.pi))
        return float(self.compiled()(np.asarray(a.pi, dtype=float), np.asarray(u, dtype=float)))

    @property
    def is_constant(self) -> bool:
        return not self.symbols()

    def __repr__(self) -> str:
        return self.source()


@dataclass(frozen=True, eq=False, repr=False)
class Const(Node):
    value: float

    def source(self):
        return repr(float(self.value))

    def symbols(self):
        return set()


@dataclass(frozen=True, eq=False, repr=False)
class Pi(Node):
    k: int
    l: int

    def source(self):
        return f"pi[{self.k}][{self.l}]"

    def symbols(self):
        return {("pi", self.k, self.l)}


@dataclass(frozen=True, eq=False, repr=False)
class U(Node):
    k: int

    def source(self):
        return f"u[{self.k}]"

    def symbols(self):
        return {("u", self.k)}


@dataclass(frozen=True, eq=False, repr=False)
class Sum(Node):
    children: tuple[Node, ...]

    def source(self):
        return "(" + " + ".join(c.source() for c in self.children) + ")" if self.children else "0.0"

    def symbols(self):
        return set().union(*(c.symbols() for c in self.children))


@dataclass(frozen=True, eq=False, repr=False)
class Prod(Node):
    children: tuple[Node, ...]

    def source(self):
        return "(" + " * ".join(c.source() for c in self.children) + ")" if self.children else "1.0"

    def symbols(self):
        return set().union(*(c.symbols() for c in self.children))


@dataclass(frozen=True, eq=False, repr=False)
class Quot(Node):
    num: Node
    den: Node

    def source(self):
        return f"({self.num.source()} / {self.den.source()})"

    def symbols(self):
        return self.num.symbols() | self.den.symbols()


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Const(float(x))


def node_sum(items: Iterable) -> Node:
    items = [as_node(i) for i in items]
    if not items:
        return Const(0.0)
    return items[0] if len(items) == 1 else Sum(tuple(items))


def mass(k: int, total: float) -> Node:
    """Unknown row mass s_k = total * u_k / (1 - u_k)."""
    return Quot(Prod((Const(float(total)), U(k))), Sum((Const(1.0), Prod((Const(-1.0), U(k))))))


SymbolicExpr = Polynomial | Node
