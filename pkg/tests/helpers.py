"""Independent oracles and small builders shared across the test suite.

Every oracle here recomputes its answer with dense numpy / scipy / plain
Python loops, deliberately avoiding the package's sweep, sparse-Gram, and
compensated-summation code paths, so agreement between the two routes is a
meaningful check rather than a tautology.
"""

from __future__ import annotations

import numpy as np
import scipy.stats

from fairstep import (
    INTERCEPT,
    DesignMatrix,
    EnrolleeRecord,
    Formula,
    VariableId,
    VariableKind,
)


# One line per acceptance criterion, printed in the terminal summary so a
# full run ends with an explicit pass/fail ledger (see conftest hooks).
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, text: str) -> None:
    ACCEPTANCE_LINES[number] = f"PASS criterion-{number}: {text}"


def make_design(dense: np.ndarray) -> DesignMatrix:
    """Dense 0/1 array (first column all ones) -> DesignMatrix."""
    dense = np.asarray(dense)
    n, p = dense.shape
    assert (dense[:, 0] == 1).all(), "first column must be the intercept"
    columns: list[VariableId] = [INTERCEPT]
    rows: list[np.ndarray | None] = [None]
    for j in range(1, p):
        columns.append(VariableId(VariableKind.HCC, f"V{j:03d}"))
        idx = np.flatnonzero(dense[:, j] != 0).astype(np.int64)
        idx.flags.writeable = False
        rows.append(idx)
    return DesignMatrix(n, tuple(columns), tuple(rows))


def random_instance(
    rng: np.random.Generator,
    n: int,
    p: int,
    density: float = 0.3,
    noise: float = 1.0,
    require_full_rank: bool = True,
):
    """Random binary design (intercept first) and a noisy linear outcome."""
    for _ in range(50):
        dense = np.zeros((n, p))
        dense[:, 0] = 1.0
        dense[:, 1:] = (rng.random((n, p - 1)) < density).astype(float)
        for j in range(1, p):
            if dense[:, j].sum() == 0:
                dense[rng.integers(n), j] = 1.0
        if not require_full_rank or np.linalg.matrix_rank(dense) == p:
            break
    beta = rng.normal(0.0, 2.0, size=p)
    y = dense @ beta + rng.normal(0.0, noise, size=n)
    return dense, y


def oracle_dense_fit(dense: np.ndarray, y: np.ndarray) -> dict:
    """Closed-form normal-equations fit for full-rank dense designs."""
    n, p = dense.shape
    xtx = dense.T @ dense
    beta = np.linalg.solve(xtx, dense.T @ y)
    resid = y - dense @ beta
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss
    df = n - p
    sigma2 = rss / df
    cov = sigma2 * np.linalg.inv(xtx)
    se = np.sqrt(np.diag(cov))
    t = beta / se
    p_two_sided = 2.0 * scipy.stats.t.sf(np.abs(t), df)
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    return {
        "beta": beta,
        "rss": rss,
        "tss": tss,
        "r2": r2,
        "adj_r2": adj_r2,
        "sigma2": sigma2,
        "se": se,
        "t": t,
        "p": p_two_sided,
        "fitted": dense @ beta,
    }


def oracle_lstsq_fitted(dense: np.ndarray, y: np.ndarray):
    """Rank-agnostic fitted values and rss (for aliased designs)."""
    beta, *_ = np.linalg.lstsq(dense, y, rcond=None)
    fitted = dense @ beta
    rss = float(((y - fitted) ** 2).sum())
    return fitted, rss


def oracle_gram(dense: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Naive double-loop augmented cross-product for small instances."""
    aug = np.column_stack([dense, y])
    m = aug.shape[1]
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            total = 0.0
            for r in range(aug.shape[0]):
                total += aug[r, i] * aug[r, j]
            out[i, j] = total
    return out


def oracle_net_compensation(yhat, y, member) -> float:
    total_hat = 0.0
    total = 0.0
    count = 0
    for i in range(len(y)):
        if member[i]:
            total_hat += yhat[i]
            total += y[i]
            count += 1
    return total_hat / count - total / count


def oracle_predictive_ratio(yhat, y, member) -> float:
    total_hat = 0.0
    total = 0.0
    for i in range(len(y)):
        if member[i]:
            total_hat += yhat[i]
            total += y[i]
    return total_hat / total


def oracle_hierarchy_fixed_point(hccs: frozenset, rules) -> frozenset:
    """Exhaustive iteration: drop everything suppressed by a present
    dominant, re-check from scratch, until nothing changes."""
    current = set(hccs)
    while True:
        doomed = set()
        for rule in rules:
            if rule.dominant in current:
                doomed |= set(rule.suppressed) & current
        if not doomed:
            return frozenset(current)
        current -= doomed


def record(
    pid: str = "p1",
    age: int = 40,
    sex: str = "F",
    region: str | None = "R1",
    codes=(),
    spend: float | None = 1000.0,
) -> EnrolleeRecord:
    return EnrolleeRecord(pid, age, sex, region, frozenset(codes), spend)


def formula_of(design: DesignMatrix, upto: int | None = None) -> Formula:
    cols = design.columns if upto is None else design.columns[:upto]
    return Formula(tuple(cols))
