"""Group fairness and global fit metrics for a fitted spending formula.

Net compensation for a group is the average predicted minus average actual
spending over its members (negative means the formula underpays the group);
the predictive ratio is predicted-over-actual totals for the group. Both
views of the same gap are reported side by side, in-sample or under
person-level cross-validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .design import DesignMatrix
from .ols import FitResult, OlsError, VariableInference, fit, predict


class MetricsError(ValueError):
    pass


def _member_arrays(yhat: np.ndarray, y: np.ndarray, member: np.ndarray):
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    member = np.asarray(member, dtype=bool)
    if not (yhat.shape == y.shape == member.shape) or yhat.ndim != 1:
        raise MetricsError("yhat, y, and member must be equal-length vectors")
    if not member.any():
        raise MetricsError("empty group")
    return yhat[member], y[member]


def net_compensation(yhat: np.ndarray, y: np.ndarray, member: np.ndarray) -> float:
    """Mean predicted minus mean actual spending over group members (USD)."""
    g_hat, g_y = _member_arrays(yhat, y, member)
    n_g = g_hat.size
    return math.fsum(g_hat) / n_g - math.fsum(g_y) / n_g


def predictive_ratio(yhat: np.ndarray, y: np.ndarray, member: np.ndarray) -> float:
    """Group total predicted over group total actual spending."""
    g_hat, g_y = _member_arrays(yhat, y, member)
    actual = math.fsum(g_y)
    if actual <= 0.0:
        raise MetricsError(f"group actual spending sum {actual:.6g} is not positive")
    return math.fsum(g_hat) / actual


@dataclass(frozen=True)
class GroupMetrics:
    group_id: str
    n_g: int
    group_mean_spend: float
    net_compensation: float
    predictive_ratio: float

    def to_json_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "n_g": self.n_g,
            "group_mean_spend": self.group_mean_spend,
            "net_compensation": self.net_compensation,
            "predictive_ratio": self.predictive_ratio,
        }


@dataclass(frozen=True)
class MetricReport:
    """Fit statistics and per-group fairness metrics for one formula.

    In cross-validated mode adj_r2 is absent and the per-variable p-values
    come from a full-data fit, so naive_p_values is set: they ignore the
    out-of-fold evaluation entirely.
    """

    r2: float
    adj_r2: float | None
    per_variable: tuple[VariableInference, ...]
    group_metrics: dict[str, GroupMetrics]
    mode: str
    folds: int | None = None
    seed: int | None = None
    naive_p_values: bool = False

    def group(self, group_id: str) -> GroupMetrics:
        try:
            return self.group_metrics[group_id]
        except KeyError:
            raise MetricsError(f"no metrics for group {group_id!r}") from None

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "folds": self.folds,
            "seed": self.seed,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "naive_p_values": self.naive_p_values,
            "per_variable": [inf.to_json_dict() for inf in self.per_variable],
            "groups": {gid: gm.to_json_dict() for gid, gm in sorted(self.group_metrics.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def report_rows(report: MetricReport, formula_label: str) -> list[dict]:
    """Flatten to one row per group for tabular export or plotting."""
    rows = []
    for gid in sorted(report.group_metrics):
        gm = report.group_metrics[gid]
        rows.append(
            {
                "formula": formula_label,
                "group_id": gid,
                "n_g": gm.n_g,
                "group_mean_spend": gm.group_mean_spend,
                "net_compensation": gm.net_compensation,
                "predictive_ratio": gm.predictive_ratio,
                "r2": report.r2,
                "adj_r2": report.adj_r2,
                "mode": report.mode,
            }
        )
    return rows


def _group_block(
    yhat: np.ndarray, y: np.ndarray, groups: dict[str, np.ndarray]
) -> dict[str, GroupMetrics]:
    out = {}
    for gid, member in groups.items():
        member = np.asarray(member, dtype=bool)
        g_y = y[member]
        if g_y.size == 0:
            raise MetricsError(f"empty group {gid!r}")
        mean_spend = math.fsum(g_y) / g_y.size
        out[gid] = GroupMetrics(
            group_id=gid,
            n_g=int(g_y.size),
            group_mean_spend=mean_spend,
            net_compensation=net_compensation(yhat, y, member),
            predictive_ratio=predictive_ratio(yhat, y, member),
        )
    return out


def in_sample_report(
    fit_result: FitResult, X: DesignMatrix, y: np.ndarray, groups: dict[str, np.ndarray]
) -> MetricReport:
    """Training-data metrics: fit statistics plus group gaps on predictions."""
    y = np.asarray(y, dtype=np.float64)
    yhat = predict(fit_result, X)
    return MetricReport(
        r2=fit_result.r2,
        adj_r2=fit_result.adj_r2,
        per_variable=fit_result.inference,
        group_metrics=_group_block(yhat, y, groups),
        mode="in_sample",
    )


def assign_folds(n: int, folds: int, seed: int) -> np.ndarray:
    """Person-level fold ids via seeded shuffle; sizes differ by at most 1."""
    if folds < 2:
        raise MetricsError("cross-validation requires at least 2 folds")
    if folds > n:
        raise MetricsError(f"cannot split {n} rows into {folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_id = np.empty(n, dtype=np.int64)
    fold_id[perm] = np.arange(n) % folds
    return fold_id


def out_of_fold_predictions(
    X: DesignMatrix, y: np.ndarray, fold_id: np.ndarray
) -> np.ndarray:
    """Each row predicted by the fit that excluded its fold."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.empty(X.n, dtype=np.float64)
    for k in range(int(fold_id.max()) + 1):
        test = fold_id == k
        train_rows = np.flatnonzero(~test)
        X_train = X.take_rows(train_rows)
        try:
            fold_fit = fit(X_train, y[train_rows])
        except OlsError as exc:
            raise MetricsError(f"fold {k}: {exc}") from exc
        yhat[test] = predict(fold_fit, X.take_rows(np.flatnonzero(test)))
    return yhat


def cross_validated_report(
    X: DesignMatrix,
    y: np.ndarray,
    groups: dict[str, np.ndarray],
    folds: int = 5,
    seed: int = 0,
) -> MetricReport:
    """Pooled out-of-fold metrics for the formula spanned by X's columns.

    r2 is 1 - sum((y - yhat_oof)^2) / tss over the pooled predictions;
    adj_r2 is not defined out-of-fold and is reported absent. p-values come
    from the full-data fit and are flagged naive.
    """
    y = np.asarray(y, dtype=np.float64)
    fold_id = assign_folds(X.n, folds, seed)
    yhat = out_of_fold_predictions(X, y, fold_id)
    full_fit = fit(X, y)
    tss = full_fit.tss
    rss_oof = math.fsum((y - yhat) ** 2)
    return MetricReport(
        r2=1.0 - rss_oof / tss,
        adj_r2=None,
        per_variable=full_fit.inference,
        group_metrics=_group_block(yhat, y, groups),
        mode="cross_validated",
        folds=folds,
        seed=seed,
        naive_p_values=True,
    )
