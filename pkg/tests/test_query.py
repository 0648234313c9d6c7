import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA, AGE_GROUP_COUNTS, raw_table, worked_example
from gictbounds.contingency import build_table, table_from_json
from gictbounds.dataset import from_records, load_csv
from gictbounds.errors import (
    CodingError,
    ConstraintError,
    MustUseBoundsError,
    ParseError,
    QueryError,
    SpuriousLevelError,
)
from gictbounds.oracle import complete_table
from gictbounds.query import QuerySpec, compile, compile_distribution, evaluate, parse_query, plug_in
from gictbounds.symbolic import Assignment, Polynomial

N1, N2, N3, N4 = 1, 2, 3, 4
N = N1 + N2 + N3 + N4


def worked_table(n=(N1, N2, N3, N4)):
    return build_table(worked_example(*n), ["A", "H"], "O")


def do_h(o, h):
    return QuerySpec.interventional("O", o, "H", h, ["A"])


def closed_form_exact(x0, x1, n=(N1, N2, N3, N4)):
    """P(O=0 | do(H=0)) with unknown counts x0 = (x_0^0, x_0^1), x1 = (x_1^0, x_1^1)."""
    n1, n2, n3, n4 = n
    total = sum(n) + sum(x0) + sum(x1)
    return (x0[0] / sum(x0)) * (n1 + n2 + sum(x0)) / total + n3 / (n3 + n4) * (n3 + n4 + sum(x1)) / total


def random_pi(rng, k, j):
    return rng.dirichlet(np.ones(j), size=k)


# --- parsing -----------------------------------------------------------------


def test_parse_interventional():
    q = parse_query("P(O=1 | do(H=0); adjust=A)")
    assert (q.kind, q.outcome, q.outcome_level, q.treatment, q.treatment_level, q.adjustment_set) == (
        "interventional", "O", "1", "H", "0", ("A",))


def test_parse_conditional_and_ate():
    q = parse_query("P(O=1 | H=0, A=1)")
    assert q.kind == "conditional" and q.conditions == (("H", "0"), ("A", "1"))
    a = parse_query("ATE(O; H: 1 vs 0; adjust=A,B)")
    assert a.kind == "ate" and a.contrast == ("1", "0") and a.adjustment_set == ("A", "B")
    assert parse_query("P(O=1 | do(H=0))").adjustment_set == ()


@pytest.mark.parametrize("text", [
    "P(O=1 | do(H=0); adjust=A)", "P(O=1 | H=0, A=1)", "ATE(O; H: 1 vs 0; adjust=A)",
])
def test_format_round_trip(text):
    assert str(parse_query(text)) == text


@pytest.mark.parametrize("text", ["Q(O=1)", "P(O=1 | do(H))", "P(O=1 | H)", "ATE(O; H 1 vs 0)"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_query(text)


def test_query_spec_invariants():
    with pytest.raises(QueryError):
        QuerySpec.interventional("O", "1", "H", "0", ["H"])
    with pytest.raises(QueryError):
        QuerySpec.interventional("O", "1", "H", "0", ["O"])


# --- compile -----------------------------------------------------------------


def test_perturbation_matches_closed_form():
    e, params = compile(worked_table(), do_h("0", "0"), "perturbation")
    assert [r.coordinates for r in params.rows] == [("0", "0"), ("1", "1")]
    # pi_0^0 * (n1+n2)/N + n3/N, nothing else
    assert set(e.terms) == {frozenset(), frozenset({(0, 0)})}
    assert e.terms[frozenset({(0, 0)})] == pytest.approx((N1 + N2) / N, abs=1e-15)
    assert e.constant_term == pytest.approx(N3 / N, abs=1e-15)
    rng = np.random.default_rng(1)
    for pi in (random_pi(rng, 2, 2) for _ in range(50)):
        expected = pi[0, 0] * (N1 + N2) / N + N3 / N
        assert e.evaluate_pi(pi) == pytest.approx(expected, abs=1e-12)


def test_evaluate_examples():
    e, params = compile(worked_table(), do_h("0", "0"), "perturbation")
    assert evaluate(e, Assignment.vertex([0, 0], 2), params) == pytest.approx((N1 + N2 + N3) / N, abs=1e-12)
    assert evaluate(e, Assignment.vertex([1, 0], 2), params) == pytest.approx(N3 / N, abs=1e-12)
    const = Polynomial.constant(0.25)
    assert evaluate(const, Assignment.vertex([1, 1], 2)) == 0.25


def test_evaluate_rejects_infeasible():
    e, params = compile(worked_table(), do_h("0", "0"), "perturbation")
    with pytest.raises(ConstraintError):
        evaluate(e, Assignment(np.array([[0.7, 0.7], [1.0, 0.0]])), params)
    x, xp = compile(worked_table(), do_h("0", "0"), "exact")
    with pytest.raises(ConstraintError):
        evaluate(x, Assignment(np.eye(2), np.array([1.0, 0.0])), xp)


def test_exact_matches_closed_form_expression():
    e, params = compile(worked_table(), do_h("0", "0"), "exact")
    assert params.exact
    rng = np.random.default_rng(2)
    for _ in range(100):
        s = rng.exponential(5.0, size=2)
        pi = random_pi(rng, 2, 2)
        u = s / (s + N)
        x0, x1 = s[0] * pi[0], s[1] * pi[1]
        got = evaluate(e, Assignment(pi, u), params)
        assert got == pytest.approx(closed_form_exact(x0, x1), rel=1e-12, abs=1e-12)


def test_exact_at_zero_mass_is_perturbation():
    tab = worked_table()
    x, _ = compile(tab, do_h("0", "0"), "exact")
    p, _ = compile(tab, do_h("0", "0"), "perturbation")
    rng = np.random.default_rng(3)
    for _ in range(20):
        pi = random_pi(rng, 2, 2)
        assert x.evaluate(Assignment(pi, np.zeros(2))) == pytest.approx(p.evaluate_pi(pi), abs=1e-12)


def test_no_zero_rows_gives_plug_in_constant():
    tab = table_from_json(raw_table(AGE_GROUP_COUNTS))
    q = QuerySpec.interventional("Obesity", "1", "Gender", "0", ["Age"])
    for mode in ("perturbation", "exact"):
        e, params = compile(tab, q, mode)
        assert params.size == 0 and e.is_constant
        assert e.evaluate(Assignment(np.zeros((0, 2)))) == pytest.approx(plug_in(tab, q), abs=1e-15)


def test_conditional_on_zero_row_is_pi(survey, impute0):
    from gictbounds.dataset import resolve_missing
    tab = build_table(resolve_missing(survey, impute0), ["Age", "Gender"], "Obesity")
    q = parse_query("P(Obesity=1 | Gender=1, Age=16)")
    e, params = compile(tab, q, "perturbation")
    assert e.terms == {frozenset({(0, 1)}): 1.0}
    x, _ = compile(tab, q, "exact")
    assert x.evaluate(Assignment(np.array([[0.3, 0.7]]), np.array([0.4]))) == pytest.approx(0.7)


def test_conditional_with_observed_mass_in_exact_mode():
    # P(O=0 | A=0) marginalizes over H; row (A=0, H=0) is unknown
    tab = worked_table()
    q = parse_query("P(O=0 | A=0)")
    p, _ = compile(tab, q, "perturbation")
    assert p.is_constant and p.constant_term == pytest.approx(N1 / (N1 + N2))
    x, _ = compile(tab, q, "exact")
    s = 6.0
    pi = np.array([[0.25, 0.75], [1.0, 0.0]])
    got = x.evaluate(Assignment(pi, np.array([s / (s + N), 0.0])))
    assert got == pytest.approx((N1 + s * 0.25) / (N1 + N2 + s), rel=1e-12)


def test_spurious_level_error():
    with pytest.raises(SpuriousLevelError):
        compile(worked_table(), do_h("0", "7"), "perturbation")
    with pytest.raises(SpuriousLevelError):
        compile(worked_table(), do_h("2", "0"), "perturbation")


def test_compile_requires_matching_table_variables():
    q = QuerySpec.interventional("O", "0", "H", "0", [])
    with pytest.raises(QueryError):
        compile(worked_table(), q, "perturbation")


def test_ate_coding_errors():
    d = from_records(["H", "O"], [("0", "no"), ("1", "yes")])
    tab = build_table(d, ["H"], "O")
    with pytest.raises(CodingError):
        compile(tab, QuerySpec.ate("O", "H", "1", "0"), "perturbation")
    e, _ = compile(tab, QuerySpec.ate("O", "H", "1", "0", coding={"no": 0, "yes": 1}), "perturbation")
    assert e.constant_term == pytest.approx(1.0)


def test_multilinear_structure():
    e, _ = compile(worked_table(), QuerySpec.ate("O", "H", "1", "0", ["A"]), "perturbation")
    assert e.is_multilinear()
    with pytest.raises(QueryError):
        Polynomial.symbol(0, 0) * Polynomial.symbol(0, 1)
    prod = Polynomial.symbol(0, 0) * Polynomial.symbol(1, 1)
    assert prod.is_multilinear() and prod.terms == {frozenset({(0, 0), (1, 1)}): 1.0}


# --- invariants ----------------------------------------------------------------


@pytest.mark.parametrize("h", ["0", "1"])
def test_normalization_identity(h):
    tab = worked_table()
    rng = np.random.default_rng(4)
    for mode, tol in (("perturbation", 1e-12), ("exact", 1e-9)):
        exprs, params = compile_distribution(tab, do_h("0", h), mode)
        for _ in range(100):
            a = Assignment(random_pi(rng, 2, 2), rng.uniform(0, 1, size=2))
            total = sum(evaluate(e, a, params) for e in exprs.values())
            assert abs(total - 1) <= tol


def random_table(draw_counts, n_zero_rows, J, rng):
    """Binary (A, H) table with the given zero rows on the diagonal."""
    zero = [("0", "0"), ("1", "1")][:n_zero_rows]
    rows = []
    for a in "01":
        for h in "01":
            if (a, h) in zero:
                continue
            for o in range(J):
                rows += [(a, h, str(o))] * int(rng.integers(1, draw_counts + 1))
    return build_table(from_records(["A", "H", "O"], rows), ["A", "H"], "O")


@given(st.integers(0, 10_000), st.integers(1, 2), st.sampled_from([2, 3]))
@settings(max_examples=40, deadline=None)
def test_normalization_random_tables(seed, k, J):
    rng = np.random.default_rng(seed)
    tab = random_table(20, k, J, rng)
    for h in "01":
        for mode, tol in (("perturbation", 1e-12), ("exact", 1e-9)):
            exprs, params = compile_distribution(tab, do_h("0", h), mode)
            a = Assignment(random_pi(rng, params.size, J), rng.uniform(0, 1, size=params.size))
            assert abs(sum(e.evaluate(a) for e in exprs.values()) - 1) <= tol


@given(st.integers(0, 10_000), st.integers(1, 2), st.sampled_from([2, 3]))
@settings(max_examples=40, deadline=None)
def test_exact_consistent_with_filled_plug_in(seed, k, J):
    rng = np.random.default_rng(seed)
    tab = random_table(20, k, J, rng)
    fill = tuple(tuple(int(c) for c in rng.integers(0, 6, size=J)) for _ in range(k))
    if any(sum(f) == 0 for f in fill):
        return
    filled = complete_table(tab, fill)
    s = np.array([sum(f) for f in fill], dtype=float)
    pi = np.array([np.array(f) / sum(f) for f in fill])
    a = Assignment(pi, s / (s + tab.total))
    for q in (do_h("0", "0"), do_h("1", "1"), QuerySpec.ate("O", "H", "1", "0", ["A"])):
        e, _ = compile(tab, q, "exact")
        assert e.evaluate(a) == pytest.approx(plug_in(filled, q), abs=1e-12)


def test_ate_is_difference_of_interventions():
    tab = worked_table()
    ate, params = compile(tab, QuerySpec.ate("O", "H", "1", "0", ["A"]), "perturbation")
    p1, _ = compile(tab, do_h("1", "1"), "perturbation")
    p0, _ = compile(tab, do_h("1", "0"), "perturbation")
    rng = np.random.default_rng(5)
    for _ in range(50):
        pi = random_pi(rng, 2, 2)
        assert ate.evaluate_pi(pi) == pytest.approx(p1.evaluate_pi(pi) - p0.evaluate_pi(pi), abs=1e-12)
    xa, _ = compile(tab, QuerySpec.ate("O", "H", "1", "0", ["A"]), "exact")
    x1, _ = compile(tab, do_h("1", "1"), "exact")
    x0, _ = compile(tab, do_h("1", "0"), "exact")
    for _ in range(50):
        a = Assignment(random_pi(rng, 2, 2), rng.uniform(0, 1, size=2))
        assert xa.evaluate(a) == pytest.approx(x1.evaluate(a) - x0.evaluate(a), abs=1e-12)


# --- plug-in -------------------------------------------------------------------


def test_plug_in_age_groups():
    tab = table_from_json(raw_table(AGE_GROUP_COUNTS))
    # (0/1)*(3/10) + (0/1)*(7/10)
    assert plug_in(tab, parse_query("P(Obesity=1 | do(Gender=1); adjust=Age)")) == 0.0
    assert plug_in(tab, parse_query("P(Obesity=1 | Gender=1)")) == 0.0
    # hand value: (2/3)(4/10) + (3/5)(6/10)
    assert plug_in(tab, parse_query("P(Obesity=1 | do(Gender=0); adjust=Age)")) == pytest.approx(
        (2 / 3) * 0.4 + (3 / 5) * 0.6, abs=1e-15)


def test_plug_in_csv_age_groups():
    d = load_csv((DATA / "survey_age_groups.csv").read_bytes())
    tab = build_table(d, ["Age", "Gender"], "Obesity")
    assert tab == table_from_json(raw_table(AGE_GROUP_COUNTS))


def test_plug_in_deterministic_dataset():
    d = from_records(["A", "B", "Y"], [("x", "y", "z")] * 5)
    tab = build_table(d, ["A", "B"], "Y")
    assert plug_in(tab, parse_query("P(Y=z | A=x, B=y)")) == 1.0
    assert plug_in(tab, parse_query("P(Y=z | do(A=x); adjust=B)")) == 1.0


def test_plug_in_rejects_gict():
    with pytest.raises(MustUseBoundsError):
        plug_in(worked_table(), do_h("0", "0"))
