"""Indicator design matrices for risk-adjustment formulas.

A formula is an ordered variable list: the intercept, a full age-sex cell
partition minus one reference cell, and zero or more HCC indicators. The
matrix is stored sparse column-major (sorted row-index arrays per column,
intercept implicit) because HCC prevalence is low; derived matrices from
column add/remove share unchanged column storage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .cohort import CodeMaps, EnrolleeRecord, assign_hccs


class DesignError(ValueError):
    """Invalid formula, variable, or matrix construction request."""


class VariableKind(str, Enum):
    INTERCEPT = "intercept"
    AGE_SEX = "age_sex"
    HCC = "hcc"


@dataclass(frozen=True, order=True)
class VariableId:
    kind: VariableKind
    key: str

    def __post_init__(self):
        if self.kind is VariableKind.INTERCEPT and self.key != "1":
            raise DesignError("intercept variable must have key '1'")

    def label(self) -> str:
        return self.key if self.kind is VariableKind.INTERCEPT else f"{self.kind.value}:{self.key}"

    def to_json_dict(self) -> dict:
        return {"kind": self.kind.value, "key": self.key}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "VariableId":
        return cls(VariableKind(obj["kind"]), obj["key"])

    @classmethod
    def from_label(cls, text: str) -> "VariableId":
        if text == "1":
            return INTERCEPT
        kind, sep, key = text.partition(":")
        if not sep or not key:
            raise DesignError(f"malformed variable label {text!r}")
        try:
            return cls(VariableKind(kind), key)
        except ValueError:
            raise DesignError(f"unknown variable kind in label {text!r}") from None


INTERCEPT = VariableId(VariableKind.INTERCEPT, "1")


def age_sex_variable(cell_label: str) -> VariableId:
    return VariableId(VariableKind.AGE_SEX, cell_label)


def hcc_variable(hcc_id: str) -> VariableId:
    return VariableId(VariableKind.HCC, hcc_id)


@dataclass(frozen=True)
class AgeBanding:
    """Age bands crossed with sex define the demographic cells.

    bands are (low, high) inclusive pairs; high=None marks the open top
    band. The default is 5-year bands 0-4 .. 80-84 plus 85+, crossed with
    sex, for 36 cells.
    """

    bands: tuple[tuple[int, int | None], ...]

    def __post_init__(self):
        expected = 0
        for lo, hi in self.bands:
            if lo != expected:
                raise DesignError(f"age bands must tile [0,120]; gap before {lo}")
            if hi is None:
                if (lo, hi) != self.bands[-1]:
                    raise DesignError("open-ended band must come last")
                return
            if hi < lo:
                raise DesignError(f"band ({lo},{hi}) is inverted")
            expected = hi + 1
        if expected <= 120:
            raise DesignError("bands must cover ages up to 120 (end with an open band)")

    def band_label(self, age: int) -> str:
        if not 0 <= age <= 120:
            raise DesignError(f"age {age} outside [0, 120]")
        for lo, hi in self.bands:
            if hi is None or age <= hi:
                return f"{lo:02d}_PLUS" if hi is None else f"{lo:02d}_{hi:02d}"
        raise AssertionError("unreachable: bands tile [0,120]")

    def cell_labels(self) -> list[str]:
        labels = []
        for sex in ("F", "M"):
            for lo, hi in self.bands:
                suffix = f"{lo:02d}_PLUS" if hi is None else f"{lo:02d}_{hi:02d}"
                labels.append(f"{sex}_{suffix}")
        return labels


DEFAULT_BANDING = AgeBanding(tuple((lo, lo + 4) for lo in range(0, 85, 5)) + ((85, None),))


def age_sex_cell(age: int, sex: str, banding: AgeBanding = DEFAULT_BANDING) -> str:
    """Deterministic cell label for an (age, sex) pair under a banding."""
    if sex not in ("F", "M"):
        raise DesignError(f"sex must be F or M, got '{sex}'")
    return f"{sex}_{banding.band_label(age)}"


@dataclass(frozen=True)
class Formula:
    """Ordered variable list; intercept exactly once, first; no duplicates."""

    variables: tuple[VariableId, ...]

    def __post_init__(self):
        if not self.variables or self.variables[0] != INTERCEPT:
            raise DesignError("formula must start with the intercept")
        if sum(1 for v in self.variables if v.kind is VariableKind.INTERCEPT) != 1:
            raise DesignError("formula must contain the intercept exactly once")
        if len(set(self.variables)) != len(self.variables):
            raise DesignError("formula contains duplicate variables")

    def __iter__(self):
        return iter(self.variables)

    def __len__(self):
        return len(self.variables)

    def __contains__(self, v: VariableId):
        return v in self.variables

    def cell_labels(self) -> set[str]:
        return {v.key for v in self.variables if v.kind is VariableKind.AGE_SEX}

    def hcc_ids(self) -> list[str]:
        return [v.key for v in self.variables if v.kind is VariableKind.HCC]

    def adding(self, new: "VariableId | Sequence[VariableId]") -> "Formula":
        if isinstance(new, VariableId):
            new = (new,)
        return Formula(self.variables + tuple(new))

    def removing(self, gone: "VariableId | Sequence[VariableId]") -> "Formula":
        if isinstance(gone, VariableId):
            gone = (gone,)
        doomed = set(gone)
        if INTERCEPT in doomed:
            raise DesignError("cannot remove the intercept")
        missing = doomed - set(self.variables)
        if missing:
            raise DesignError(f"cannot remove absent variable(s): {sorted(v.label() for v in missing)}")
        return Formula(tuple(v for v in self.variables if v not in doomed))

    def to_json_dict(self) -> dict:
        return {"variables": [v.to_json_dict() for v in self.variables]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Formula":
        return cls(tuple(VariableId.from_json_dict(v) for v in obj["variables"]))

    @classmethod
    def from_json(cls, text: str) -> "Formula":
        return cls.from_json_dict(json.loads(text))


def demographic_formula(
    banding: AgeBanding = DEFAULT_BANDING, reference_cell: str | None = None
) -> Formula:
    """Intercept plus every age-sex cell except the reference cell."""
    labels = banding.cell_labels()
    if reference_cell is None:
        reference_cell = labels[0]
    if reference_cell not in labels:
        raise DesignError(f"reference cell '{reference_cell}' not in banding")
    return Formula(
        (INTERCEPT,) + tuple(age_sex_variable(c) for c in labels if c != reference_cell)
    )


def check_cells_known(formula: Formula, banding: AgeBanding) -> None:
    """Every age-sex cell in the formula must be a label of the banding."""
    unknown = formula.cell_labels() - set(banding.cell_labels())
    if unknown:
        raise DesignError(f"formula references unknown cells: {sorted(unknown)}")


def check_cell_partition(formula: Formula, banding: AgeBanding) -> None:
    """The formula's age-sex cells must be the full partition minus one.

    Stricter than what build_design needs (any known subset of cells is a
    valid design); demographic blocks built for production formulas keep one
    reference cell out so the intercept stays identified.
    """
    check_cells_known(formula, banding)
    missing = set(banding.cell_labels()) - formula.cell_labels()
    if len(missing) != 1:
        raise DesignError(
            f"formula must omit exactly one reference cell; missing {sorted(missing)}"
        )


@dataclass(frozen=True)
class DesignMatrix:
    """Immutable n x p binary indicator matrix with sparse column storage.

    column_rows holds, for each column, the sorted row indices carrying a 1;
    the intercept column is implicit (None entry, support n). Derived
    matrices from with_column/without_column share the untouched arrays.
    """

    n: int
    columns: tuple[VariableId, ...]
    column_rows: tuple[np.ndarray | None, ...]

    def __post_init__(self):
        if len(self.columns) != len(self.column_rows):
            raise DesignError("column metadata and storage lengths differ")

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def column_support(self) -> tuple[int, ...]:
        return tuple(
            self.n if rows is None else int(rows.size) for rows in self.column_rows
        )

    def index_of(self, v: VariableId) -> int:
        try:
            return self.columns.index(v)
        except ValueError:
            raise DesignError(f"variable {v.label()} not in design") from None

    def rows_of(self, v: VariableId) -> np.ndarray | None:
        return self.column_rows[self.index_of(v)]

    def column_vector(self, j: int) -> np.ndarray:
        out = np.zeros(self.n)
        rows = self.column_rows[j]
        if rows is None:
            out[:] = 1.0
        else:
            out[rows] = 1.0
        return out

    def toarray(self) -> np.ndarray:
        return np.column_stack([self.column_vector(j) for j in range(self.p)])

    def take_rows(self, row_indices: np.ndarray) -> "DesignMatrix":
        """Row-subset (for cross-validation folds); columns keep their order."""
        keep = np.zeros(self.n, dtype=bool)
        keep[row_indices] = True
        new_pos = np.cumsum(keep) - 1
        new_n = int(keep.sum())
        new_cols = []
        for rows in self.column_rows:
            if rows is None:
                new_cols.append(None)
            else:
                kept = rows[keep[rows]]
                arr = new_pos[kept].astype(np.int64)
                arr.flags.writeable = False
                new_cols.append(arr)
        return DesignMatrix(new_n, self.columns, tuple(new_cols))


def _freeze(rows: np.ndarray) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int64)
    arr.flags.writeable = False
    return arr


def _indicator_rows(
    v: VariableId,
    records: Sequence[EnrolleeRecord],
    maps: CodeMaps,
    banding: AgeBanding,
    hcc_cache: list[frozenset[str]] | None = None,
) -> np.ndarray | None:
    if v.kind is VariableKind.INTERCEPT:
        return None
    if v.kind is VariableKind.AGE_SEX:
        hits = [i for i, r in enumerate(records) if age_sex_cell(r.age, r.sex, banding) == v.key]
    else:
        if v.key not in maps.payment_hccs:
            raise DesignError(f"HCC '{v.key}' is not in the payment-eligible HCC list")
        if hcc_cache is None:
            hcc_cache = [assign_hccs(r, maps) for r in records]
        hits = [i for i, sets in enumerate(hcc_cache) if v.key in sets]
    return _freeze(np.array(hits, dtype=np.int64))


def build_design(
    records: Sequence[EnrolleeRecord],
    formula: Formula,
    maps: CodeMaps,
    banding: AgeBanding = DEFAULT_BANDING,
) -> DesignMatrix:
    """Evaluate every formula variable against every record.

    Row i, column c is 1 iff record i falls in that age-sex cell or carries
    that HCC after hierarchy filtering. Column order follows the formula.
    """
    if not records:
        raise DesignError("cannot build a design over an empty cohort")
    check_cells_known(formula, banding)
    hcc_cache = [assign_hccs(r, maps) for r in records]
    cols = tuple(
        _indicator_rows(v, records, maps, banding, hcc_cache) for v in formula
    )
    return DesignMatrix(len(records), tuple(formula.variables), cols)


def with_column(
    X: DesignMatrix,
    v: VariableId,
    records: Sequence[EnrolleeRecord],
    maps: CodeMaps,
    banding: AgeBanding = DEFAULT_BANDING,
) -> DesignMatrix:
    """New matrix with one trailing column appended; X is unchanged."""
    if v in X.columns:
        raise DesignError(f"variable {v.label()} already present")
    if len(records) != X.n:
        raise DesignError("record count does not match design rows")
    rows = _indicator_rows(v, records, maps, banding)
    return DesignMatrix(X.n, X.columns + (v,), X.column_rows + (rows,))


def without_column(X: DesignMatrix, v: VariableId) -> DesignMatrix:
    """New matrix without that column; remaining column order preserved."""
    if v.kind is VariableKind.INTERCEPT:
        raise DesignError("cannot remove the intercept column")
    j = X.index_of(v)
    return DesignMatrix(
        X.n,
        X.columns[:j] + X.columns[j + 1 :],
        X.column_rows[:j] + X.column_rows[j + 1 :],
    )
