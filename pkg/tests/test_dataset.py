import pytest
from hypothesis import given
from hypothesis import strategies as st

from gictbounds.dataset import (
    MISSING,
    MissingPolicy,
    from_records,
    load_csv,
    resolve_missing,
    support,
)
from gictbounds.errors import (
    EmptyDatasetError,
    ParseError,
    SchemaError,
    UnknownVariableError,
    UnresolvableMissingError,
)


def test_load_survey(survey):
    assert survey.row_count == 10
    assert survey.names == ("N", "Age", "Gender", "Obesity")
    assert survey.variable("Obesity").levels == ("0", "1")
    obesity = survey.column("Obesity")
    assert obesity[2] is MISSING and obesity[5] is MISSING
    assert sum(v is MISSING for v in obesity) == 2


def test_single_row():
    d = load_csv(b"A,B\n0,1\n")
    assert d.row_count == 1
    assert d.variable("A").levels == ("0",)
    assert d.variable("B").levels == ("1",)


def test_ragged_row_reports_line():
    with pytest.raises(ParseError, match="line 2"):
        load_csv("Age,Gender,Obesity\n16,0\n")


def test_duplicate_header():
    with pytest.raises(SchemaError):
        load_csv("A,A\n0,1\n")


def test_empty_data():
    with pytest.raises(EmptyDatasetError):
        load_csv("A,B\n")
    with pytest.raises(EmptyDatasetError):
        load_csv("")


def test_default_markers():
    d = load_csv("A,B\n0,NA\n1,\n1,2\n")
    assert d.column("B") == [MISSING, MISSING, "2"]


def test_levels_are_strings_not_numbers():
    d = load_csv("A\n1\n01\n")
    assert d.variable("A").levels == ("01", "1")


def test_delete_rows(survey):
    d = resolve_missing(survey, MissingPolicy.delete_rows())
    assert d.row_count == 8
    assert [r[0] for r in d.records] == ["1", "2", "4", "5", "7", "8", "9", "10"]
    assert not d.has_missing()


def test_impute_constant_recount(survey, impute0):
    d = resolve_missing(survey, impute0)
    assert d.row_count == 10
    age, gender, ob = d.column("Age"), d.column("Gender"), d.column("Obesity")
    def count(a, g):
        return tuple(
            sum(1 for x, y, o in zip(age, gender, ob) if (x, y, o) == (a, g, lv)) for lv in "01"
        )
    assert count("15", "0") == (1, 2)
    assert count("15", "1") == (1, 0)


def test_impute_constant_rejects_unknown_level(survey):
    with pytest.raises(UnresolvableMissingError):
        resolve_missing(survey, MissingPolicy.impute_constant({"Obesity": "7"}))


def test_impute_constant_needs_every_missing_variable(survey):
    with pytest.raises(UnresolvableMissingError):
        resolve_missing(survey, MissingPolicy.impute_constant({"Age": "14"}))


def test_impute_mode(survey):
    d = resolve_missing(survey, MissingPolicy.impute_mode())
    # observed Obesity: five 1s, three 0s
    assert d.column("Obesity")[2] == "1"


def test_impute_mode_unresolvable():
    d = from_records(["A", "B"], [("0", "x"), ("1", "x")], missing_markers={"x"})
    with pytest.raises(UnresolvableMissingError):
        resolve_missing(d, MissingPolicy.impute_mode())


def test_no_missing_is_identity(worked):
    for policy in (MissingPolicy.delete_rows(), MissingPolicy.impute_mode(),
                   MissingPolicy.impute_constant({"O": "0"})):
        assert resolve_missing(worked, policy) == worked


def test_support(survey):
    d = resolve_missing(survey)
    assert support(d, "Age") == ("14", "15", "16")
    assert support(d, "Gender") == ("0", "1")
    with pytest.raises(UnknownVariableError):
        support(d, "Height")
    with pytest.raises(UnresolvableMissingError):
        support(survey, "Obesity")


def test_support_singleton():
    d = load_csv("A,B\n0,1\n")
    assert support(d, "A") == ("0",) and support(d, "B") == ("1",)


def test_policy_parse():
    assert MissingPolicy.parse("delete").kind == "delete_rows"
    assert MissingPolicy.parse("mode").kind == "impute_mode"
    p = MissingPolicy.parse("impute:Obesity=0,Age=14")
    assert p.kind == "impute_constant" and p.constants == {"Obesity": "0", "Age": "14"}
    with pytest.raises(ParseError):
        MissingPolicy.parse("impute:Obesity")


cell = st.sampled_from(["a", "b", "c", None])
rows = st.lists(st.tuples(cell, cell, st.sampled_from(["0", "1"])), min_size=1, max_size=30)


@given(rows, st.sampled_from(["delete_rows", "impute_mode"]))
def test_resolve_is_idempotent(data, kind):
    d = from_records(["X", "Y", "Z"], [tuple("NA" if v is None else v for v in r) for r in data], {"NA"})
    policy = MissingPolicy(kind)
    try:
        once = resolve_missing(d, policy)
    except UnresolvableMissingError:
        return
    assert resolve_missing(once, policy) == once
    assert not once.has_missing()
    if kind == "delete_rows":
        n_missing = sum(any(v is MISSING for v in rec) for rec in d.records)
        assert once.row_count == d.row_count - n_missing
    for v in once.names:
        col = once.column(v)
        assert all(col.count(lv) > 0 for lv in support(once, v))
