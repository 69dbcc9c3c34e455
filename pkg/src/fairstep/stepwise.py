"""Stepwise formula search under pluggable acceptance policies.

Candidates are curated ordered blocks (single variables are one-element
blocks). Each pass proposes additions in pool order, then removals in
reverse formula order; the first acceptable step is committed and the pass
restarts, until a full pass accepts nothing. Every evaluated candidate is
logged, accepted or not, so two policies' traces can be compared step by
step.

Acceptance composes objectives conjunctively: any objective's rejection is
final, otherwise any objective's approval carries, and when every objective
is indifferent the parsimony flag decides removals. A visited-formula guard
rejects steps that would revisit an earlier state, which bounds the search
when a zero-gain add/remove pair would otherwise oscillate.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .cohort import CodeMaps, EnrolleeRecord, GroupDefinition, group_membership
from .design import DEFAULT_BANDING, AgeBanding, DesignMatrix, Formula, VariableId, build_design
from .metrics import MetricReport, MetricsError, assign_folds, in_sample_report
from .ols import FitResult, SweepState, cross_product, predict

NET_COMP_TOLERANCE_USD = 0.01


class StepwiseError(ValueError):
    pass


class StepKind(str, Enum):
    ADD = "add"
    REMOVE = "remove"


@dataclass(frozen=True)
class StepAction:
    kind: StepKind
    variables: tuple[VariableId, ...]
    block_id: str | None = None

    def __post_init__(self):
        if not self.variables:
            raise StepwiseError("step action needs at least one variable")
        if len(set(self.variables)) != len(self.variables):
            raise StepwiseError("step action variables must be distinct")

    def label(self) -> str:
        sign = "+" if self.kind is StepKind.ADD else "-"
        name = self.block_id or ",".join(v.label() for v in self.variables)
        return f"{sign}{name}"

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "variables": [v.label() for v in self.variables],
            "block_id": self.block_id,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "StepAction":
        try:
            kind = StepKind(obj["kind"])
        except (KeyError, ValueError):
            raise StepwiseError(f"unknown step kind {obj.get('kind')!r}") from None
        variables = tuple(VariableId.from_label(t) for t in obj.get("variables", ()))
        return cls(kind, variables, obj.get("block_id"))


@dataclass(frozen=True)
class CandidateBlock:
    """Named ordered block of variables stepped in or out together."""

    block_id: str
    variables: tuple[VariableId, ...]

    def __post_init__(self):
        if not self.variables:
            raise StepwiseError(f"block {self.block_id!r} is empty")
        if len(set(self.variables)) != len(self.variables):
            raise StepwiseError(f"block {self.block_id!r} has duplicate variables")


def propose_steps(current: Formula, pool: Sequence[CandidateBlock]) -> list[StepAction]:
    """Additions in pool order, then removals in reverse formula order.

    A block fully outside the formula proposes an Add, a block fully inside
    proposes a Remove; partially overlapping blocks propose nothing this
    pass.
    """
    seen = set()
    for block in pool:
        if block.block_id in seen:
            raise StepwiseError(f"duplicate block id {block.block_id!r}")
        seen.add(block.block_id)
    present = set(current)
    adds = []
    removals = []
    for block in pool:
        inside = sum(1 for v in block.variables if v in present)
        if inside == 0:
            adds.append(StepAction(StepKind.ADD, block.variables, block.block_id))
        elif inside == len(block.variables):
            removals.append(block)
    position = {v: i for i, v in enumerate(current)}
    removals.sort(key=lambda b: max(position[v] for v in b.variables), reverse=True)
    return adds + [StepAction(StepKind.REMOVE, b.variables, b.block_id) for b in removals]


@dataclass(frozen=True)
class StepDeltas:
    """Absolute and relative changes a candidate step would cause.

    Relative changes are fractions of the previous value's magnitude and are
    absent when the previous value is zero. added_p_values carries the
    post-step p-value of every added variable (absent when aliased).
    """

    r2_abs: float
    r2_rel: float | None
    adj_r2_abs: float | None
    adj_r2_rel: float | None
    nc_abs: dict[str, float]
    nc_rel: dict[str, float | None]
    added_p_values: dict[str, float | None]
    min_added_p: float | None
    all_added_aliased: bool

    def to_json_dict(self) -> dict:
        return {
            "r2_abs": self.r2_abs,
            "r2_rel": self.r2_rel,
            "adj_r2_abs": self.adj_r2_abs,
            "adj_r2_rel": self.adj_r2_rel,
            "nc_abs": dict(sorted(self.nc_abs.items())),
            "nc_rel": dict(sorted(self.nc_rel.items())),
            "added_p_values": dict(sorted(self.added_p_values.items())),
            "min_added_p": self.min_added_p,
            "all_added_aliased": self.all_added_aliased,
        }


def _relative(before: float | None, after: float | None) -> float | None:
    if before is None or after is None or before == 0.0:
        return None
    return (after - before) / abs(before)


def _make_deltas(
    action: StepAction,
    before: MetricReport,
    after: MetricReport,
    fit_after: FitResult,
) -> StepDeltas:
    nc_abs = {}
    nc_rel = {}
    for gid, gm in after.group_metrics.items():
        b = before.group(gid).net_compensation
        nc_abs[gid] = gm.net_compensation - b
        nc_rel[gid] = _relative(b, gm.net_compensation)
    added_p: dict[str, float | None] = {}
    all_aliased = False
    if action.kind is StepKind.ADD:
        for v in action.variables:
            added_p[v.label()] = fit_after.p_value(v)
        all_aliased = all(v in fit_after.aliased for v in action.variables)
    present = [p for p in added_p.values() if p is not None]
    adj_abs = None
    if before.adj_r2 is not None and after.adj_r2 is not None:
        adj_abs = after.adj_r2 - before.adj_r2
    return StepDeltas(
        r2_abs=after.r2 - before.r2,
        r2_rel=_relative(before.r2, after.r2),
        adj_r2_abs=adj_abs,
        adj_r2_rel=_relative(before.adj_r2, after.adj_r2),
        nc_abs=nc_abs,
        nc_rel=nc_rel,
        added_p_values=added_p,
        min_added_p=min(present) if present else None,
        all_added_aliased=all_aliased,
    )


class Verdict(Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    TIE = "tie"


class Objective:
    def verdict(
        self,
        action: StepAction,
        deltas: StepDeltas,
        before: MetricReport,
        after: MetricReport,
    ) -> tuple[Verdict, str]:
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class MaxR2(Objective):
    """Accept additions gaining at least min_gain of r2; removals losing no
    more than min_gain are a tie left to the parsimony flag."""

    min_gain: float = 0.0

    def __post_init__(self):
        if self.min_gain < 0:
            raise StepwiseError("min_gain must be >= 0")

    def label(self) -> str:
        return f"max_r2(min_gain={self.min_gain:g})"

    def verdict(self, action, deltas, before, after):
        d = deltas.r2_abs
        if d >= self.min_gain:
            return Verdict.ACCEPT, f"r2 change {d:.6g} >= min_gain {self.min_gain:g}"
        if action.kind is StepKind.ADD:
            return Verdict.REJECT, f"r2 gain {d:.6g} < min_gain {self.min_gain:g}"
        if -d <= self.min_gain:
            return Verdict.TIE, f"r2 loss {-d:.6g} within min_gain {self.min_gain:g}"
        return Verdict.REJECT, f"r2 loss {-d:.6g} > min_gain {self.min_gain:g}"


@dataclass(frozen=True)
class PValueGate(Objective):
    """Every added variable must clear p < alpha; removals pass through."""

    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise StepwiseError("alpha must lie in (0, 1)")

    def label(self) -> str:
        return f"p_gate(alpha={self.alpha:g})"

    def verdict(self, action, deltas, before, after):
        if action.kind is StepKind.REMOVE:
            return Verdict.TIE, "p-value gate constrains additions only"
        for label, p in deltas.added_p_values.items():
            if p is None:
                return Verdict.REJECT, f"{label} has no p-value (aliased)"
            if p >= self.alpha:
                return Verdict.REJECT, f"{label} p={p:.4g} >= alpha {self.alpha:g}"
        return Verdict.ACCEPT, f"all added p-values < alpha {self.alpha:g}"


@dataclass(frozen=True)
class NetCompTowardZero(Objective):
    """Shrink |net compensation| of one group, never crossing above zero.

    Changes within a cent are a tie so numerically equal alternatives do not
    oscillate; with require_nonpositive_start, a step that flips the group
    from underpaid to overpaid is rejected as overshoot.
    """

    group_id: str
    require_nonpositive_start: bool = True

    def label(self) -> str:
        return f"net_comp_toward_zero({self.group_id})"

    def verdict(self, action, deltas, before, after):
        b = before.group(self.group_id).net_compensation
        a = after.group(self.group_id).net_compensation
        if self.require_nonpositive_start and b <= 0.0 and a > 0.0:
            return (
                Verdict.REJECT,
                f"{self.group_id} net compensation {b:.2f} -> {a:.2f} overshoots zero",
            )
        if abs(a) < abs(b) - NET_COMP_TOLERANCE_USD:
            return Verdict.ACCEPT, f"|{self.group_id} net compensation| {abs(b):.2f} -> {abs(a):.2f}"
        if abs(a) <= abs(b) + NET_COMP_TOLERANCE_USD:
            return Verdict.TIE, f"{self.group_id} net compensation change within $0.01"
        return (
            Verdict.REJECT,
            f"|{self.group_id} net compensation| grows {abs(b):.2f} -> {abs(a):.2f}",
        )


@dataclass(frozen=True)
class EvaluationMode:
    mode: str = "in_sample"
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("in_sample", "cross_validated"):
            raise StepwiseError(f"unknown evaluation mode {self.mode!r}")

    @classmethod
    def in_sample(cls) -> "EvaluationMode":
        return cls("in_sample")

    @classmethod
    def cross_validated(cls, folds: int = 5, seed: int = 0) -> "EvaluationMode":
        return cls("cross_validated", folds, seed)


@dataclass(frozen=True)
class SelectionPolicy:
    """Ordered objectives applied conjunctively.

    Any objective's rejection is final; otherwise any approval carries; when
    all objectives are indifferent, parsimony_tiebreak accepts removals and
    rejects additions. Later objectives therefore settle what earlier ones
    leave tied, and a gate objective placed first can veto.
    """

    objectives: tuple[Objective, ...]
    parsimony_tiebreak: bool = False
    evaluation: EvaluationMode = field(default_factory=EvaluationMode.in_sample)
    name: str | None = None

    def __post_init__(self):
        if not self.objectives:
            raise StepwiseError("policy needs at least one objective")

    def label(self) -> str:
        if self.name:
            return self.name
        inner = ", ".join(o.label() for o in self.objectives)
        return inner if len(self.objectives) == 1 else f"lex({inner})"

    def decide(
        self,
        action: StepAction,
        deltas: StepDeltas,
        before: MetricReport,
        after: MetricReport,
    ) -> tuple[bool, str]:
        accept_reason = None
        for objective in self.objectives:
            verdict, reason = objective.verdict(action, deltas, before, after)
            if verdict is Verdict.REJECT:
                return False, reason
            if verdict is Verdict.ACCEPT and accept_reason is None:
                accept_reason = reason
        if accept_reason is not None:
            return True, accept_reason
        if action.kind is StepKind.REMOVE and self.parsimony_tiebreak:
            return True, "all objectives tied; parsimony prefers the smaller formula"
        return False, "all objectives tied; no improvement established"


def max_r2_policy(
    min_gain: float = 0.0,
    parsimony_tiebreak: bool = True,
    evaluation: EvaluationMode | None = None,
    name: str | None = None,
) -> SelectionPolicy:
    return SelectionPolicy(
        (MaxR2(min_gain),),
        parsimony_tiebreak,
        evaluation or EvaluationMode.in_sample(),
        name,
    )


def net_comp_policy(
    group_id: str,
    require_nonpositive_start: bool = True,
    evaluation: EvaluationMode | None = None,
    name: str | None = None,
) -> SelectionPolicy:
    return SelectionPolicy(
        (NetCompTowardZero(group_id, require_nonpositive_start),),
        False,
        evaluation or EvaluationMode.in_sample(),
        name,
    )


def gated_r2_policy(
    alpha: float = 0.05,
    min_gain: float = 0.0,
    parsimony_tiebreak: bool = True,
    evaluation: EvaluationMode | None = None,
    name: str | None = None,
) -> SelectionPolicy:
    return SelectionPolicy(
        (PValueGate(alpha), MaxR2(min_gain)),
        parsimony_tiebreak,
        evaluation or EvaluationMode.in_sample(),
        name,
    )


@dataclass(frozen=True, eq=False)
class StepwiseProblem:
    """One cohort prepared for searching: the union candidate design, the
    outcome, group membership masks, the starting formula, and the pool."""

    design: DesignMatrix
    y: np.ndarray
    group_masks: dict[str, np.ndarray]
    baseline: Formula
    pool: tuple[CandidateBlock, ...]

    def __post_init__(self):
        present = set(self.design.columns)
        for v in self.baseline:
            if v not in present:
                raise StepwiseError(f"baseline variable {v.label()} missing from design")
        for block in self.pool:
            for v in block.variables:
                if v not in present:
                    raise StepwiseError(
                        f"block {block.block_id!r} variable {v.label()} missing from design"
                    )


def build_problem(
    records: Sequence[EnrolleeRecord],
    baseline: Formula,
    pool: Sequence[CandidateBlock],
    maps: CodeMaps,
    groups: Sequence[GroupDefinition],
    banding: AgeBanding = DEFAULT_BANDING,
) -> StepwiseProblem:
    """Assemble the search inputs from scored records and group definitions."""
    spends = []
    for r in records:
        if r.spend_total is None:
            raise StepwiseError(f"record {r.person_id} has no spending; apply exclusions first")
        spends.append(r.spend_total)
    union = baseline
    for block in pool:
        for v in block.variables:
            if v not in set(union):
                union = union.adding(v)
    design = build_design(records, union, maps, banding)
    masks = {g.group_id: group_membership(records, g, maps) for g in groups}
    return StepwiseProblem(
        design=design,
        y=np.asarray(spends, dtype=np.float64),
        group_masks=masks,
        baseline=baseline,
        pool=tuple(pool),
    )


class InSampleEvaluator:
    """Holds the swept state for the current formula; evaluating a candidate
    derives a new state without touching the current one."""

    def __init__(self, problem: StepwiseProblem):
        self._problem = problem
        cp = cross_product(problem.design, problem.y)
        state = SweepState.start(cp)
        for v in problem.baseline:
            state = state.add(v)
        self._state = state
        self._fit = state.fit_result()
        self.report = self._report_for(self._fit)

    def _report_for(self, fit_result: FitResult) -> MetricReport:
        return in_sample_report(
            fit_result, self._problem.design, self._problem.y, self._problem.group_masks
        )

    def evaluate(self, action: StepAction):
        state = self._state
        for v in action.variables:
            state = state.add(v) if action.kind is StepKind.ADD else state.remove(v)
        fit_result = state.fit_result()
        report = self._report_for(fit_result)
        deltas = _make_deltas(action, self.report, report, fit_result)
        return report, deltas, (state, fit_result)

    def commit(self, handle, report: MetricReport) -> None:
        self._state, self._fit = handle
        self.report = report

    def snapshot(self):
        return (self._state, self._fit, self.report)

    def restore(self, snap) -> None:
        self._state, self._fit, self.report = snap


class CrossValidatedEvaluator:
    """Mirrors the search on each fold's training rows; candidate metrics are
    pooled out-of-fold predictions, p-values come from the full-data state."""

    def __init__(self, problem: StepwiseProblem, folds: int, seed: int):
        self._problem = problem
        self.folds = folds
        self.seed = seed
        fold_id = assign_folds(problem.design.n, folds, seed)
        self._tests = []
        self._test_designs = []
        fold_states = []
        for k in range(folds):
            test = np.flatnonzero(fold_id == k)
            train = np.flatnonzero(fold_id != k)
            X_train = problem.design.take_rows(train)
            try:
                cp = cross_product(X_train, problem.y[train])
                state = SweepState.start(cp)
                for v in problem.baseline:
                    state = state.add(v)
                state.fit_result()
            except Exception as exc:
                raise MetricsError(f"fold {k}: {exc}") from exc
            self._tests.append(test)
            self._test_designs.append(problem.design.take_rows(test))
            fold_states.append(state)
        full_state = SweepState.start(cross_product(problem.design, problem.y))
        for v in problem.baseline:
            full_state = full_state.add(v)
        self._fold_states = tuple(fold_states)
        self._full_state = full_state
        self.report = self._report_for(self._fold_states, full_state.fit_result())

    def _report_for(self, fold_states, full_fit: FitResult) -> MetricReport:
        from .metrics import GroupMetrics, net_compensation, predictive_ratio  # cycle-free

        y = self._problem.y
        yhat = np.empty(y.size, dtype=np.float64)
        for k, state in enumerate(fold_states):
            fold_fit = state.fit_result()
            yhat[self._tests[k]] = predict(fold_fit, self._test_designs[k])
        rss_oof = math.fsum((y - yhat) ** 2)
        groups = {}
        for gid, member in self._problem.group_masks.items():
            member = np.asarray(member, dtype=bool)
            g_y = y[member]
            groups[gid] = GroupMetrics(
                group_id=gid,
                n_g=int(g_y.size),
                group_mean_spend=math.fsum(g_y) / g_y.size,
                net_compensation=net_compensation(yhat, y, member),
                predictive_ratio=predictive_ratio(yhat, y, member),
            )
        return MetricReport(
            r2=1.0 - rss_oof / full_fit.tss,
            adj_r2=None,
            per_variable=full_fit.inference,
            group_metrics=groups,
            mode="cross_validated",
            folds=self.folds,
            seed=self.seed,
            naive_p_values=True,
        )

    def evaluate(self, action: StepAction):
        def advance(state):
            for v in action.variables:
                state = state.add(v) if action.kind is StepKind.ADD else state.remove(v)
            return state

        fold_states = tuple(advance(s) for s in self._fold_states)
        full_state = advance(self._full_state)
        full_fit = full_state.fit_result()
        report = self._report_for(fold_states, full_fit)
        deltas = _make_deltas(action, self.report, report, full_fit)
        return report, deltas, (fold_states, full_state)

    def commit(self, handle, report: MetricReport) -> None:
        self._fold_states, self._full_state = handle
        self.report = report

    def snapshot(self):
        return (self._fold_states, self._full_state, self.report)

    def restore(self, snap) -> None:
        self._fold_states, self._full_state, self.report = snap


def make_evaluator(problem: StepwiseProblem, evaluation: EvaluationMode):
    if evaluation.mode == "cross_validated":
        return CrossValidatedEvaluator(problem, evaluation.folds, evaluation.seed)
    return InSampleEvaluator(problem)


def evaluate_step(evaluator, action: StepAction) -> tuple[MetricReport, StepDeltas]:
    """Metrics a candidate step would produce; the current state is untouched."""
    report, deltas, _ = evaluator.evaluate(action)
    return report, deltas


@dataclass(frozen=True)
class TraceEntry:
    index: int
    action: StepAction
    report_before: MetricReport
    report_after: MetricReport
    accepted: bool
    reason: str
    evaluations_before: int
    accepted_before: int

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "action": self.action.to_json_dict(),
            "accepted": self.accepted,
            "reason": self.reason,
            "evaluations_before": self.evaluations_before,
            "accepted_before": self.accepted_before,
            "p_value_caveat": (
                f"p-values computed after {self.evaluations_before} prior candidate fits; "
                "no selection adjustment"
            ),
            "report_before": self.report_before.to_json_dict(),
            "report_after": self.report_after.to_json_dict(),
        }


@dataclass(frozen=True)
class DecisionTrace:
    baseline: Formula
    entries: tuple[TraceEntry, ...]

    def accepted_entries(self) -> list[TraceEntry]:
        return [e for e in self.entries if e.accepted]

    def accepted_actions(self) -> list[StepAction]:
        return [e.action for e in self.entries if e.accepted]

    def final_formula(self) -> Formula:
        formula = self.baseline
        for action in self.accepted_actions():
            formula = _apply_action(formula, action)
        return formula

    def to_json_dict(self) -> dict:
        return {
            "baseline": self.baseline.to_json_dict(),
            "entries": [e.to_json_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_rows(self) -> list[dict]:
        """One flattened row per evaluated step, for tabular export."""
        rows = []
        for e in self.entries:
            row = {
                "index": e.index,
                "action": e.action.label(),
                "kind": e.action.kind.value,
                "accepted": e.accepted,
                "reason": e.reason,
                "r2_before": e.report_before.r2,
                "r2_after": e.report_after.r2,
                "adj_r2_before": e.report_before.adj_r2,
                "adj_r2_after": e.report_after.adj_r2,
            }
            for gid in sorted(e.report_after.group_metrics):
                row[f"nc_before:{gid}"] = e.report_before.group(gid).net_compensation
                row[f"nc_after:{gid}"] = e.report_after.group(gid).net_compensation
            rows.append(row)
        return rows

    def to_text(self) -> str:
        lines = [f"baseline: {len(self.baseline)} columns"]
        for e in self.entries:
            mark = "ACCEPT" if e.accepted else "reject"
            lines.append(
                f"[{e.index:3d}] {mark} {e.action.label():<24} "
                f"r2 {e.report_before.r2:.6f} -> {e.report_after.r2:.6f}  ({e.reason})"
            )
            for gid in sorted(e.report_after.group_metrics):
                b = e.report_before.group(gid).net_compensation
                a = e.report_after.group(gid).net_compensation
                lines.append(f"      net_comp[{gid}] {b:+.2f} -> {a:+.2f}")
        lines.append(
            "note: p-values are naive per-fit values; each entry records how many "
            "candidate fits preceded it"
        )
        return "\n".join(lines)

    def to_dot(self) -> str:
        """Graph rendering: formula nodes, solid accepted edges, dashed
        rejected probes."""

        def fmt_report(report: MetricReport) -> str:
            parts = [f"r2={report.r2:.4f}"]
            for gid in sorted(report.group_metrics):
                parts.append(f"nc[{gid}]={report.group(gid).net_compensation:.0f}")
            return "\\n".join(parts)

        lines = ["digraph stepwise_trace {", "  rankdir=LR;", '  node [shape=box, fontsize=10];']
        node = 0
        if self.entries:
            base_report = self.entries[0].report_before
            lines.append(f'  f0 [label="baseline\\n{fmt_report(base_report)}"];')
        else:
            lines.append('  f0 [label="baseline"];')
        for e in self.entries:
            if e.accepted:
                nxt = node + 1
                lines.append(f'  f{nxt} [label="{e.action.label()}\\n{fmt_report(e.report_after)}"];')
                lines.append(f'  f{node} -> f{nxt} [label="{e.action.label()}"];')
                node = nxt
            else:
                lines.append(
                    f'  r{e.index} [label="{e.action.label()}\\n{fmt_report(e.report_after)}", '
                    "style=dashed, color=gray];"
                )
                lines.append(
                    f'  f{node} -> r{e.index} [style=dashed, color=gray, '
                    f'label="{_dot_escape(e.reason)}"];'
                )
        lines.append("}")
        return "\n".join(lines)


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def apply_action(formula: Formula, action: StepAction) -> Formula:
    """The formula an action would leave behind (no refit)."""
    for v in action.variables:
        formula = formula.adding(v) if action.kind is StepKind.ADD else formula.removing(v)
    return formula


_apply_action = apply_action


def _signature(formula: Formula) -> frozenset:
    return frozenset(formula)


@dataclass(frozen=True)
class StepwiseResult:
    policy: SelectionPolicy
    final_formula: Formula
    trace: DecisionTrace
    final_report: MetricReport


def run_stepwise(problem: StepwiseProblem, policy: SelectionPolicy) -> StepwiseResult:
    """Propose, evaluate, and accept steps until a full pass accepts nothing."""
    evaluator = make_evaluator(problem, policy.evaluation)
    formula = problem.baseline
    # each (formula, action) pair may be accepted at most once; the pair
    # space is finite, so zero-gain add/remove ties cannot cycle and the
    # removal (taken last) leaves the smaller formula standing
    taken: set[tuple] = set()
    entries: list[TraceEntry] = []
    evaluations = 0
    accepted_count = 0
    searching = True
    while searching:
        searching = False
        for action in propose_steps(formula, problem.pool):
            report_before = evaluator.report
            report_after, deltas, handle = evaluator.evaluate(action)
            ok, reason = policy.decide(action, deltas, report_before, report_after)
            if action.kind is StepKind.ADD and deltas.all_added_aliased:
                reason = f"aliased: {reason}"
            candidate = _apply_action(formula, action)
            pair = (_signature(formula), action.kind.value, _signature(candidate))
            if ok and pair in taken:
                ok = False
                reason = f"cycle guard: step already taken from this formula ({reason})"
            entries.append(
                TraceEntry(
                    index=len(entries),
                    action=action,
                    report_before=report_before,
                    report_after=report_after,
                    accepted=ok,
                    reason=reason,
                    evaluations_before=evaluations,
                    accepted_before=accepted_count,
                )
            )
            evaluations += 1
            if ok:
                evaluator.commit(handle, report_after)
                taken.add(pair)
                formula = candidate
                accepted_count += 1
                searching = True
                break
    return StepwiseResult(
        policy=policy,
        final_formula=formula,
        trace=DecisionTrace(problem.baseline, tuple(entries)),
        final_report=evaluator.report,
    )


def accepted_steps_from_json(doc: dict) -> tuple[Formula, tuple[StepAction, ...]]:
    """Baseline formula and accepted actions parsed from a serialized trace."""
    baseline = Formula.from_json_dict(doc["baseline"])
    actions = tuple(
        StepAction.from_json_dict(e["action"]) for e in doc["entries"] if e["accepted"]
    )
    return baseline, actions


def replay(problem: StepwiseProblem, trace: DecisionTrace) -> tuple[Formula, MetricReport]:
    """Re-apply a trace's accepted actions from the baseline with fresh fits."""
    if tuple(trace.baseline) != tuple(problem.baseline):
        raise StepwiseError("trace baseline does not match the problem baseline")
    formula = trace.final_formula()
    state = SweepState.start(cross_product(problem.design, problem.y))
    for v in formula:
        state = state.add(v)
    report = in_sample_report(
        state.fit_result(), problem.design, problem.y, problem.group_masks
    )
    return formula, report


@dataclass(frozen=True)
class PolicyComparison:
    results: tuple[StepwiseResult, ...]
    divergence_step: int | None
    pairwise_divergence: dict[tuple[str, str], int | None]

    def to_json_dict(self) -> dict:
        return {
            "policies": [r.policy.label() for r in self.results],
            "divergence_step": self.divergence_step,
            "pairwise_divergence": {
                f"{a} | {b}": idx for (a, b), idx in sorted(self.pairwise_divergence.items())
            },
            "final_formulas": {
                r.policy.label(): r.final_formula.to_json_dict() for r in self.results
            },
            "final_reports": {
                r.policy.label(): r.final_report.to_json_dict() for r in self.results
            },
            "traces": {r.policy.label(): r.trace.to_json_dict() for r in self.results},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_text(self) -> str:
        lines = []
        if self.divergence_step is None:
            lines.append("policies accepted identical step sequences")
        else:
            lines.append(f"first divergence at accepted step {self.divergence_step}")
        header = f"{'policy':<40} {'r2':>10} {'adj_r2':>10}"
        group_ids = sorted(self.results[0].final_report.group_metrics)
        for gid in group_ids:
            header += f" {'nc:' + gid:>16}"
        lines.append(header)
        for r in self.results:
            adj = r.final_report.adj_r2
            row = f"{r.policy.label():<40} {r.final_report.r2:>10.6f} "
            row += f"{adj:>10.6f}" if adj is not None else f"{'absent':>10}"
            for gid in group_ids:
                row += f" {r.final_report.group(gid).net_compensation:>16.2f}"
            lines.append(row)
        return "\n".join(lines)


def _divergence_index(a: list[StepAction], b: list[StepAction]) -> int | None:
    for i in range(min(len(a), len(b))):
        if a[i].to_json_dict() != b[i].to_json_dict():
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def compare_policies(
    problem: StepwiseProblem, policies: Sequence[SelectionPolicy]
) -> PolicyComparison:
    """Run each policy on the same problem and locate where paths split."""
    if len(policies) < 2:
        raise StepwiseError("comparison needs at least 2 policies")
    # Colliding labels (e.g. literally identical policies) get a #k suffix so
    # the report keys stay unique; the runs themselves are unaffected.
    seen: dict[str, int] = {}
    disambiguated = []
    for p in policies:
        label = p.label()
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            p = dataclasses.replace(p, name=f"{label}#{seen[label]}")
        disambiguated.append(p)
    policies = disambiguated
    labels = [p.label() for p in policies]
    results = tuple(run_stepwise(problem, p) for p in policies)
    accepted = [r.trace.accepted_actions() for r in results]
    pairwise: dict[tuple[str, str], int | None] = {}
    overall: int | None = None
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            idx = _divergence_index(accepted[i], accepted[j])
            pairwise[(labels[i], labels[j])] = idx
            if idx is not None and (overall is None or idx < overall):
                overall = idx
    return PolicyComparison(results, overall, pairwise)
