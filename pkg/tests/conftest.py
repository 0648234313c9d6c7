from pathlib import Path

import pytest

from gictbounds.dataset import MissingPolicy, from_records, load_csv

DATA = Path(__file__).parent / "data"

# Obesity counts per (Age, Gender) row after treating m1, m2 as Obesity=0
SURVEY_COUNTS = {
    ("14", "0"): (1, 2),
    ("14", "1"): (1, 0),
    ("15", "0"): (1, 2),
    ("15", "1"): (1, 0),
    ("16", "0"): (1, 1),
    ("16", "1"): (0, 0),
}
AGE_GROUP_COUNTS = {
    ("A1", "0"): (1, 2),
    ("A1", "1"): (1, 0),
    ("A2", "0"): (2, 3),
    ("A2", "1"): (1, 0),
}


def worked_example(n1=1, n2=2, n3=3, n4=4):
    """Dataset whose (A, H) x O table has zero rows at (0,0) and (1,1)."""
    rows = (
        [("0", "1", "0")] * n1
        + [("0", "1", "1")] * n2
        + [("1", "0", "0")] * n3
        + [("1", "0", "1")] * n4
    )
    return from_records(["A", "H", "O"], rows)


@pytest.fixture
def survey_csv():
    return (DATA / "survey.csv").read_bytes()


@pytest.fixture
def survey(survey_csv):
    return load_csv(survey_csv, {"m1", "m2"})


@pytest.fixture
def impute0():
    return MissingPolicy.impute_constant({"Obesity": "0"})


@pytest.fixture
def worked():
    return worked_example()


def raw_table(cells, cond=("Age", "Gender"), outcome=("Obesity", ("0", "1")), extra_levels=None):
    """Raw-table JSON dict from {coords: counts-per-outcome}."""
    levels = [sorted({c[i] for c in cells} | set((extra_levels or {}).get(v, ()))) for i, v in enumerate(cond)]
    return {
        "condition_vars": [{"name": v, "levels": lv} for v, lv in zip(cond, levels)],
        "outcome_var": {"name": outcome[0], "levels": list(outcome[1])},
        "counts": [
            {"coordinates": list(c), "outcome_level": outcome[1][j], "count": n}
            for c, counts in cells.items()
            for j, n in enumerate(counts)
            if n
        ],
    }
