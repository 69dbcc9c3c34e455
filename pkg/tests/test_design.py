"""Indicator design construction against a brute-force cell-by-cell oracle."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from fairstep import (
    DEFAULT_BANDING,
    INTERCEPT,
    AgeBanding,
    DesignError,
    Formula,
    VariableId,
    VariableKind,
    age_sex_cell,
    age_sex_variable,
    assign_hccs,
    build_design,
    check_cell_partition,
    demographic_formula,
    hcc_variable,
    with_column,
    without_column,
)

from helpers import record


def test_age_sex_cell_examples():
    assert age_sex_cell(37, "F") == "F_35_39"
    assert age_sex_cell(0, "M") == "M_00_04"
    assert age_sex_cell(91, "F") == "F_85_PLUS"


def test_age_sex_cell_band_edges():
    assert age_sex_cell(4, "M") == "M_00_04"
    assert age_sex_cell(5, "M") == "M_05_09"
    assert age_sex_cell(84, "F") == "F_80_84"
    assert age_sex_cell(85, "F") == "F_85_PLUS"
    assert age_sex_cell(120, "M") == "M_85_PLUS"


def test_age_out_of_range_rejected():
    with pytest.raises(DesignError):
        age_sex_cell(121, "F")
    with pytest.raises(DesignError):
        age_sex_cell(-1, "M")


def test_default_banding_has_36_cells():
    assert len(DEFAULT_BANDING.cell_labels()) == 36


def test_demographic_formula_reference_cell_omitted():
    f = demographic_formula(DEFAULT_BANDING, "F_35_39")
    labels = [v.key for v in f.variables if v.kind is VariableKind.AGE_SEX]
    assert "F_35_39" not in labels
    assert len(labels) == 35
    check_cell_partition(f, DEFAULT_BANDING)


def test_cell_partition_rejects_two_missing_cells():
    f = demographic_formula(DEFAULT_BANDING, "F_35_39")
    f = f.removing(age_sex_variable("M_00_04"))
    with pytest.raises(DesignError):
        check_cell_partition(f, DEFAULT_BANDING)


def test_build_design_single_row_example(toy_maps):
    rec = record(age=37, sex="F", codes={"D100"})
    f = Formula((INTERCEPT, age_sex_variable("F_35_39"), hcc_variable("HCC_A")))
    X = build_design([rec], f, toy_maps)
    assert X.toarray().tolist() == [[1.0, 1.0, 1.0]]


def test_build_design_reference_cell_row(toy_maps):
    f = demographic_formula(DEFAULT_BANDING, "F_35_39")
    rec = record(age=36, sex="F", codes=set())
    X = build_design([rec], f, toy_maps)
    row = X.toarray()[0]
    assert row[0] == 1.0
    assert row[1:].sum() == 0.0


def test_build_design_unknown_hcc_rejected(toy_maps):
    f = Formula((INTERCEPT, hcc_variable("HCC_NOPE")))
    with pytest.raises(DesignError):
        build_design([record()], f, toy_maps)


def _brute_force_design(records, formula, maps, banding):
    rows = []
    for rec in records:
        cell = age_sex_cell(rec.age, rec.sex, banding)
        hccs = assign_hccs(rec, maps)
        row = []
        for v in formula.variables:
            if v.kind is VariableKind.INTERCEPT:
                row.append(1.0)
            elif v.kind is VariableKind.AGE_SEX:
                row.append(1.0 if v.key == cell else 0.0)
            else:
                row.append(1.0 if v.key in hccs else 0.0)
        rows.append(row)
    return np.array(rows)


def _random_records(rng, n, maps):
    pool = list(maps.icd_to_ccs)
    out = []
    for i in range(n):
        k = int(rng.integers(0, 4))
        codes = frozenset(rng.choice(pool, size=k, replace=False).tolist())
        out.append(
            record(
                pid=f"r{i}",
                age=int(rng.integers(0, 100)),
                sex="F" if rng.random() < 0.5 else "M",
                codes=codes,
                spend=float(rng.integers(0, 5000)),
            )
        )
    return out


def test_build_design_matches_brute_force(toy_maps, rng):
    records = _random_records(rng, 20, toy_maps)
    f = Formula(
        (
            INTERCEPT,
            age_sex_variable("F_35_39"),
            age_sex_variable("M_00_04"),
            hcc_variable("HCC_A"),
            hcc_variable("HCC_B"),
        )
    )
    X = build_design(records, f, toy_maps)
    expected = _brute_force_design(records, f, toy_maps, DEFAULT_BANDING)
    np.testing.assert_array_equal(X.toarray(), expected)


def test_column_support_equals_hcc_counts(toy_maps, rng):
    records = _random_records(rng, 60, toy_maps)
    f = Formula((INTERCEPT, hcc_variable("HCC_A"), hcc_variable("HCC_D")))
    X = build_design(records, f, toy_maps)
    for hcc in ("HCC_A", "HCC_D"):
        expected = sum(1 for r in records if hcc in assign_hccs(r, toy_maps))
        assert X.column_support[X.index_of(hcc_variable(hcc))] == expected
    assert X.column_support[X.index_of(INTERCEPT)] == len(records)


def test_each_row_has_at_most_one_cell(toy_maps, rng):
    records = _random_records(rng, 80, toy_maps)
    f = demographic_formula()
    X = build_design(records, f, toy_maps)
    dense = X.toarray()
    cell_cols = [
        j for j, v in enumerate(X.columns) if v.kind is VariableKind.AGE_SEX
    ]
    sums = dense[:, cell_cols].sum(axis=1)
    assert set(sums.tolist()) <= {0.0, 1.0}


def test_permutation_equivariance(toy_maps, rng):
    records = _random_records(rng, 25, toy_maps)
    vars_ = (
        INTERCEPT,
        age_sex_variable("F_35_39"),
        hcc_variable("HCC_A"),
        hcc_variable("HCC_B"),
    )
    f1 = Formula(vars_)
    f2 = Formula((vars_[0], vars_[2], vars_[3], vars_[1]))
    X1 = build_design(records, f1, toy_maps).toarray()
    X2 = build_design(records, f2, toy_maps).toarray()
    np.testing.assert_array_equal(X1[:, [0, 2, 3, 1]], X2)


def test_with_column_append_semantics(toy_maps, rng):
    records = _random_records(rng, 30, toy_maps)
    f = Formula((INTERCEPT, hcc_variable("HCC_A"), hcc_variable("HCC_B")))
    X = build_design(records, f, toy_maps)
    bigger = with_column(X, hcc_variable("HCC_D"), records, toy_maps)
    assert bigger.p == X.p + 1
    np.testing.assert_array_equal(bigger.toarray()[:, : X.p], X.toarray())
    singleton = build_design(
        records, Formula((INTERCEPT, hcc_variable("HCC_D"))), toy_maps
    )
    np.testing.assert_array_equal(bigger.toarray()[:, -1], singleton.toarray()[:, 1])
    with pytest.raises(DesignError):
        with_column(bigger, hcc_variable("HCC_D"), records, toy_maps)


def test_without_column_round_trip_bit_identical(toy_maps, rng):
    records = _random_records(rng, 30, toy_maps)
    f = Formula((INTERCEPT, hcc_variable("HCC_A"), hcc_variable("HCC_B")))
    X = build_design(records, f, toy_maps)
    v = hcc_variable("HCC_D")
    back = without_column(with_column(X, v, records, toy_maps), v)
    assert back.columns == X.columns
    np.testing.assert_array_equal(back.toarray(), X.toarray())
    for col in X.columns[1:]:
        assert np.array_equal(back.rows_of(col), X.rows_of(col))


def test_without_middle_column_preserves_order(toy_maps, rng):
    records = _random_records(rng, 30, toy_maps)
    f = Formula(
        (
            INTERCEPT,
            hcc_variable("HCC_A"),
            hcc_variable("HCC_B"),
            hcc_variable("HCC_C"),
            hcc_variable("HCC_D"),
        )
    )
    X = build_design(records, f, toy_maps)
    smaller = without_column(X, hcc_variable("HCC_B"))
    assert [v.key for v in smaller.columns] == ["1", "HCC_A", "HCC_C", "HCC_D"]
    rebuilt = build_design(
        records,
        Formula((INTERCEPT, hcc_variable("HCC_A"), hcc_variable("HCC_C"), hcc_variable("HCC_D"))),
        toy_maps,
    )
    np.testing.assert_array_equal(smaller.toarray(), rebuilt.toarray())


def test_without_intercept_rejected(toy_maps):
    X = build_design([record()], Formula((INTERCEPT, hcc_variable("HCC_A"))), toy_maps)
    with pytest.raises(DesignError):
        without_column(X, INTERCEPT)
    with pytest.raises(DesignError):
        without_column(X, hcc_variable("HCC_B"))


def test_formula_document_round_trip():
    f = Formula(
        (
            INTERCEPT,
            age_sex_variable("F_35_39"),
            hcc_variable("HCC_B"),
            hcc_variable("HCC_A"),
        )
    )
    doc = f.to_json_dict()
    back = Formula.from_json_dict(doc)
    assert back == f
    assert [v.key for v in back.variables] == [v.key for v in f.variables]


def test_formula_validation():
    with pytest.raises(DesignError):
        Formula((hcc_variable("HCC_A"),))  # intercept missing
    with pytest.raises(DesignError):
        Formula((INTERCEPT, hcc_variable("HCC_A"), hcc_variable("HCC_A")))
    with pytest.raises(DesignError):
        Formula((hcc_variable("HCC_A"), INTERCEPT))


def test_variable_label_round_trip():
    for v in (INTERCEPT, age_sex_variable("F_35_39"), hcc_variable("HCC_A")):
        assert VariableId.from_label(v.label()) == v
    with pytest.raises(DesignError):
        VariableId.from_label("bogus")


@settings(max_examples=40, deadline=None)
@given(hst.integers(min_value=0, max_value=120), hst.sampled_from(["F", "M"]))
def test_every_age_lands_in_exactly_one_band(age, sex):
    label = age_sex_cell(age, sex)
    assert label in DEFAULT_BANDING.cell_labels()
    assert label.startswith(sex + "_")


def test_custom_banding_labels():
    banding = AgeBanding(((0, 17), (18, 64), (65, None)))
    assert age_sex_cell(17, "F", banding) == "F_00_17"
    assert age_sex_cell(18, "F", banding) == "F_18_64"
    assert age_sex_cell(80, "M", banding) == "M_65_PLUS"
    assert len(banding.cell_labels()) == 6
