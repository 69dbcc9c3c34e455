"""Least-squares fitting on indicator designs via the sweep operator.

The augmented cross-product matrix [X|y]'[X|y] is the whole substrate:
sweeping a predictor's pivot brings it into the model, sweeping it again
takes it back out, so single-variable refits cost O(p^2) instead of
O(n p^2). Pivots are tested against a tolerance relative to each column's
original diagonal entry; columns that fail are reported aliased (not
estimable) rather than estimated at zero.

Spending sums are accumulated with exact compensated summation (math.fsum)
in sorted row order, so cross products are reproducible and USD^2 totals
over large cohorts do not drift.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy import stats

from .design import DesignMatrix, Formula, VariableId, VariableKind

PIVOT_RTOL = 1e-10


class OlsError(ValueError):
    """Fit preconditions violated (degenerate outcome, no residual df, ...)."""


class AliasedPivotError(OlsError):
    """Requested pivot is below tolerance; the column is aliased."""


@dataclass(frozen=True)
class CrossProduct:
    """Augmented cross products [X|y]'[X|y]; outcome occupies the last slot.

    tss (total sum of squares about the outcome mean) is cached here from a
    separate two-pass accumulation so downstream R^2 values do not rely on
    the cancellation-prone Sy^2 - (Sy)^2/n difference.
    """

    matrix: np.ndarray
    columns: tuple[VariableId, ...]
    n: int
    tss: float

    @property
    def outcome_index(self) -> int:
        return len(self.columns)


def cross_product(X: DesignMatrix, y: np.ndarray) -> CrossProduct:
    """Exact augmented Gram matrix of the design and outcome."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size != X.n:
        raise OlsError(f"outcome length {y.size} does not match {X.n} design rows")
    p = X.p
    out = np.zeros((p + 1, p + 1))

    # Indicator-by-indicator entries are intersection counts: exact integers,
    # summation-order independent.
    indptr = [0]
    indices: list[np.ndarray] = []
    for rows in X.column_rows:
        col = np.arange(X.n, dtype=np.int64) if rows is None else rows
        indices.append(col)
        indptr.append(indptr[-1] + col.size)
    data = np.ones(indptr[-1])
    sparse = scipy.sparse.csc_matrix(
        (data, np.concatenate(indices) if indices else np.array([], dtype=np.int64), indptr),
        shape=(X.n, p),
    )
    out[:p, :p] = (sparse.T @ sparse).toarray()

    # Outcome column: compensated sums in sorted row order.
    for j, rows in enumerate(X.column_rows):
        values = y if rows is None else y[rows]
        out[j, p] = out[p, j] = math.fsum(values)
    out[p, p] = math.fsum(y * y)

    ybar = math.fsum(y) / X.n
    tss = math.fsum((y - ybar) ** 2)
    return CrossProduct(out, X.columns, X.n, tss)


def sweep(M: np.ndarray, k: int, tol: float = 0.0) -> np.ndarray:
    """Sweep pivot k of a symmetric cross-product matrix; returns a new matrix.

    A positive pivot is swept in (M'[k][k] = -1/d, row and column k divided
    by d, rank-one update elsewhere); a negative pivot means the column is
    already swept and the inverse transform is applied, which makes sweeping
    the same pivot twice restore the matrix exactly. Pivots at or below tol
    in magnitude raise AliasedPivotError without touching M.
    """
    d = float(M[k, k])
    if abs(d) <= tol:
        raise AliasedPivotError(f"pivot {k} magnitude {abs(d):.3e} is at or below tolerance")
    col = M[:, k].copy()
    row = M[k, :].copy()
    out = M - np.outer(col, row) / d
    sign = 1.0 if d > 0 else -1.0
    out[:, k] = sign * col / d
    out[k, :] = sign * row / d
    out[k, k] = -1.0 / d
    return out


@dataclass(frozen=True)
class VariableInference:
    variable: VariableId
    coefficient: float
    std_error: float | None
    t_stat: float | None
    p_value: float | None
    aliased: bool

    def to_json_dict(self) -> dict:
        return {
            "variable": self.variable.to_json_dict(),
            "coefficient": self.coefficient,
            "std_error": self.std_error,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "aliased": self.aliased,
        }


@dataclass(frozen=True)
class FitResult:
    """Coefficients and naive inference for one formula on one cohort.

    p-values are two-sided from the t distribution with df_resid degrees of
    freedom and carry no correction for any selection procedure that chose
    the formula.
    """

    formula: Formula
    coefficients: dict[VariableId, float]
    rss: float
    tss: float
    df_resid: int
    sigma2: float
    r2: float
    adj_r2: float
    inference: tuple[VariableInference, ...]
    aliased: frozenset[VariableId]
    n: int

    def coefficient(self, v: VariableId) -> float:
        return self.coefficients[v]

    def p_value(self, v: VariableId) -> float | None:
        for inf in self.inference:
            if inf.variable == v:
                return inf.p_value
        raise OlsError(f"no inference for {v.label()}")

    def to_json_dict(self) -> dict:
        return {
            "formula": self.formula.to_json_dict(),
            "n": self.n,
            "rss": self.rss,
            "tss": self.tss,
            "df_resid": self.df_resid,
            "sigma2": self.sigma2,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "coefficients": {v.label(): c for v, c in self.coefficients.items()},
            "inference": [inf.to_json_dict() for inf in self.inference],
            "aliased": sorted(v.label() for v in self.aliased),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


@dataclass(frozen=True)
class SweepState:
    """Immutable swept cross-product state for one candidate column space.

    model holds the column indices currently in the formula, in formula
    order; aliased members are in the formula but unswept because their
    pivot collapsed against the columns swept before them. Add/remove
    return derived states and leave the receiver untouched.
    """

    cp: CrossProduct
    matrix: np.ndarray
    model: tuple[int, ...]
    aliased: frozenset[int]
    pivot_rtol: float = PIVOT_RTOL

    @classmethod
    def start(cls, cp: CrossProduct, pivot_rtol: float = PIVOT_RTOL) -> "SweepState":
        if not cp.columns or cp.columns[0].kind is not VariableKind.INTERCEPT:
            raise OlsError("sweep state requires the intercept as the first column")
        matrix = cp.matrix.copy()
        matrix.flags.writeable = False
        return cls(cp, matrix, (), frozenset(), pivot_rtol)

    def _tolerance(self, k: int) -> float:
        return self.pivot_rtol * float(self.cp.matrix[k, k])

    def _swept(self) -> list[int]:
        return [k for k in self.model if k not in self.aliased]

    def with_model(self, formula: Formula) -> "SweepState":
        state = self
        for v in formula:
            state = state.add(v)
        return state

    def index_of(self, v: VariableId) -> int:
        try:
            return self.cp.columns.index(v)
        except ValueError:
            raise OlsError(f"variable {v.label()} not in the candidate column space") from None

    def add(self, v: VariableId) -> "SweepState":
        k = self.index_of(v)
        if k in self.model:
            raise OlsError(f"variable {v.label()} already in the model")
        try:
            matrix = sweep(self.matrix, k, self._tolerance(k))
        except AliasedPivotError:
            return SweepState(
                self.cp, self.matrix, self.model + (k,), self.aliased | {k}, self.pivot_rtol
            )
        matrix.flags.writeable = False
        return SweepState(self.cp, matrix, self.model + (k,), self.aliased, self.pivot_rtol)

    def remove(self, v: VariableId) -> "SweepState":
        k = self.index_of(v)
        if k not in self.model:
            raise OlsError(f"variable {v.label()} not in the model")
        if v.kind is VariableKind.INTERCEPT:
            raise OlsError("cannot remove the intercept")
        model = tuple(i for i in self.model if i != k)
        if k in self.aliased:
            return SweepState(self.cp, self.matrix, model, self.aliased - {k}, self.pivot_rtol)
        matrix = sweep(self.matrix, k)
        # A freed pivot can make a previously aliased column estimable again;
        # retry them in formula order so the outcome matches a from-scratch
        # sweep of the same formula.
        aliased = set(self.aliased)
        changed = True
        while changed:
            changed = False
            for j in model:
                if j in aliased:
                    try:
                        matrix = sweep(matrix, j, self._tolerance(j))
                    except AliasedPivotError:
                        continue
                    aliased.discard(j)
                    changed = True
        matrix.flags.writeable = False
        return SweepState(self.cp, matrix, model, frozenset(aliased), self.pivot_rtol)

    def fit_result(self) -> FitResult:
        if not self.model or self.model[0] != 0:
            raise OlsError("model must include the intercept")
        n = self.cp.n
        tss = self.cp.tss
        if tss <= 0.0:
            raise OlsError("degenerate outcome: total sum of squares is zero")
        swept = self._swept()
        df_resid = n - len(swept)
        if df_resid < 1:
            raise OlsError(
                f"no residual degrees of freedom: n={n}, estimated columns={len(swept)}"
            )
        last = self.cp.outcome_index
        rss = float(self.matrix[last, last])
        rss = min(max(rss, 0.0), tss)
        sigma2 = rss / df_resid
        r2 = min(max(1.0 - rss / tss, 0.0), 1.0)
        p_eff = len(swept) - 1
        adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p_eff - 1)

        coefficients: dict[VariableId, float] = {}
        inference: list[VariableInference] = []
        aliased_vars = frozenset(self.cp.columns[k] for k in self.aliased)
        for k in self.model:
            v = self.cp.columns[k]
            if k in self.aliased:
                coefficients[v] = 0.0
                if v.kind is not VariableKind.INTERCEPT:
                    inference.append(VariableInference(v, 0.0, None, None, None, True))
                continue
            coef = float(self.matrix[k, last])
            coefficients[v] = coef
            if v.kind is VariableKind.INTERCEPT:
                continue
            var_scale = max(-float(self.matrix[k, k]), 0.0)
            se = math.sqrt(var_scale * sigma2)
            if se > 0.0:
                t = coef / se
                p = 2.0 * float(stats.t.sf(abs(t), df_resid))
                inference.append(VariableInference(v, coef, se, t, p, False))
            else:
                inference.append(VariableInference(v, coef, None, None, None, False))

        formula = Formula(tuple(self.cp.columns[k] for k in self.model))
        return FitResult(
            formula=formula,
            coefficients=coefficients,
            rss=rss,
            tss=tss,
            df_resid=df_resid,
            sigma2=sigma2,
            r2=r2,
            adj_r2=adj_r2,
            inference=tuple(inference),
            aliased=aliased_vars,
            n=n,
        )


def fit(X: DesignMatrix, y: np.ndarray, pivot_rtol: float = PIVOT_RTOL) -> FitResult:
    """Least-squares fit of every design column, intercept first."""
    cp = cross_product(X, y)
    state = SweepState.start(cp, pivot_rtol)
    for v in X.columns:
        state = state.add(v)
    return state.fit_result()


def refit_add(state: SweepState, v: VariableId) -> tuple[SweepState, FitResult]:
    """Model plus one column in O(p^2); aliased additions leave fit unchanged."""
    new_state = state.add(v)
    return new_state, new_state.fit_result()


def refit_remove(state: SweepState, v: VariableId) -> tuple[SweepState, FitResult]:
    """Model minus one column in O(p^2)."""
    new_state = state.remove(v)
    return new_state, new_state.fit_result()


def predict(fit_result: FitResult, X: DesignMatrix) -> np.ndarray:
    """Predicted spending X . coefficients; aliased columns contribute zero."""
    for v in fit_result.formula:
        if v not in X.columns:
            raise OlsError(f"design lacks formula column {v.label()}")
    out = np.zeros(X.n)
    for v in fit_result.formula:
        coef = fit_result.coefficients[v]
        if coef == 0.0:
            continue
        rows = X.rows_of(v)
        if rows is None:
            out += coef
        else:
            out[rows] += coef
    return out
