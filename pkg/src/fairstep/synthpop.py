"""Deterministic synthetic enrollee populations with a coded-but-unpayable
spending mechanism.

Spending is a lognormal base draw plus a lognormal contribution per present
condition. Conditions listed as group conditions define membership in a
target group; each member is flagged unrecognized with a fixed probability,
and an unrecognized member's group conditions emit their non-payable ICD
variants: the spending still happens, the CCS grouping still sees it, but
the payment formula cannot. Non-group conditions may carry a relative-risk
multiplier that raises or lowers their prevalence among group members while
preserving the marginal prevalence, which is what gives deletion steps
group-specific consequences.

Generation is blockwise with per-block seeds derived from (seed, block
index), so output is identical however the blocks are scheduled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .cohort import CodeMaps, EnrolleeRecord, assign_hccs
from .design import AgeBanding, Formula
from .metrics import in_sample_report
from .ols import fit

BLOCK_SIZE = 4096
REGIONS = ("R1", "R2", "R3", "R4")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class ConditionSpec:
    """One synthetic condition: how often it occurs, what it codes to, and
    what it costs.

    emits are the ICD codes written when the person is recognized;
    unrecognized_emits replace them for unrecognized group members (required
    for payable group conditions when unrecognized_fraction > 0). group_rr
    multiplies the prevalence among target-group members; the marginal
    prevalence stays at `prevalence`.
    """

    condition_id: str
    prevalence: float
    emits: tuple[str, ...]
    payable: bool
    spend_mu: float
    spend_sigma: float
    unrecognized_emits: tuple[str, ...] | None = None
    group_rr: float = 1.0

    def __post_init__(self):
        # zero is allowed so ablation specs can switch a condition off
        if not 0.0 <= self.prevalence < 1.0:
            raise SynthError(f"{self.condition_id}: prevalence must lie in [0,1)")
        if not self.emits:
            raise SynthError(f"{self.condition_id}: emits no ICD codes")
        if self.spend_sigma < 0:
            raise SynthError(f"{self.condition_id}: negative sigma")
        if self.group_rr <= 0:
            raise SynthError(f"{self.condition_id}: relative risk must be positive")

    def mean_contribution(self) -> float:
        return math.exp(self.spend_mu + self.spend_sigma**2 / 2.0)


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    seed: int
    condition_table: tuple[ConditionSpec, ...]
    base_spend_mu: float
    base_spend_sigma: float
    group_condition_ids: dict[str, tuple[str, ...]]
    unrecognized_fraction: float = 0.8
    target_group_id: str | None = None

    def __post_init__(self):
        if self.n <= 0:
            raise SynthError("population size must be positive")
        if not 0.0 <= self.unrecognized_fraction <= 1.0:
            raise SynthError("unrecognized_fraction must lie in [0,1]")
        ids = [c.condition_id for c in self.condition_table]
        if len(set(ids)) != len(ids):
            raise SynthError("duplicate condition ids")
        known = set(ids)
        for gid, members in self.group_condition_ids.items():
            for cid in members:
                if cid not in known:
                    raise SynthError(f"group {gid!r} references unknown condition {cid!r}")

    def target_group(self) -> str:
        if self.target_group_id is not None:
            return self.target_group_id
        if not self.group_condition_ids:
            raise SynthError("no groups configured")
        return next(iter(self.group_condition_ids))

    def condition(self, condition_id: str) -> ConditionSpec:
        for c in self.condition_table:
            if c.condition_id == condition_id:
                return c
        raise SynthError(f"unknown condition {condition_id!r}")

    def validate_against(self, maps: CodeMaps) -> None:
        """Every ICD any condition can emit must be CCS-mapped."""
        for c in self.condition_table:
            for icd in c.emits + (c.unrecognized_emits or ()):
                if icd not in maps.icd_to_ccs:
                    raise SynthError(f"{c.condition_id}: ICD {icd!r} absent from code maps")

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "base_spend_mu": self.base_spend_mu,
            "base_spend_sigma": self.base_spend_sigma,
            "unrecognized_fraction": self.unrecognized_fraction,
            "target_group_id": self.target_group(),
            "group_condition_ids": {g: list(v) for g, v in self.group_condition_ids.items()},
            "condition_table": [
                {
                    "condition_id": c.condition_id,
                    "prevalence": c.prevalence,
                    "emits": list(c.emits),
                    "payable": c.payable,
                    "spend_mu": c.spend_mu,
                    "spend_sigma": c.spend_sigma,
                    "unrecognized_emits": (
                        list(c.unrecognized_emits) if c.unrecognized_emits else None
                    ),
                    "group_rr": c.group_rr,
                }
                for c in self.condition_table
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SyntheticSpec":
        conditions = tuple(
            ConditionSpec(
                condition_id=c["condition_id"],
                prevalence=c["prevalence"],
                emits=tuple(c["emits"]),
                payable=c["payable"],
                spend_mu=c["spend_mu"],
                spend_sigma=c["spend_sigma"],
                unrecognized_emits=(
                    tuple(c["unrecognized_emits"]) if c.get("unrecognized_emits") else None
                ),
                group_rr=c.get("group_rr", 1.0),
            )
            for c in doc["condition_table"]
        )
        return cls(
            n=doc["n"],
            seed=doc["seed"],
            condition_table=conditions,
            base_spend_mu=doc["base_spend_mu"],
            base_spend_sigma=doc["base_spend_sigma"],
            group_condition_ids={
                g: tuple(v) for g, v in doc["group_condition_ids"].items()
            },
            unrecognized_fraction=doc.get("unrecognized_fraction", 0.8),
            target_group_id=doc.get("target_group_id"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls.from_json_dict(json.loads(text))


def _member_adjusted(prevalence: float, rr: float, pi: float) -> tuple[float, float]:
    """(prevalence among members, among non-members) preserving the marginal.

    p = pi * p_m + (1 - pi) * p_nm with p_m = rr * p_nm.
    """
    denom = 1.0 + pi * (rr - 1.0)
    p_m = rr * prevalence / denom
    p_nm = prevalence / denom
    if p_m >= 1.0:
        raise SynthError(
            f"relative risk {rr:g} pushes member prevalence to {p_m:.3f} (>= 1)"
        )
    return p_m, p_nm


def generate(spec: SyntheticSpec, maps: CodeMaps | None = None) -> list[EnrolleeRecord]:
    """Deterministic population; same spec (and seed) gives identical output.

    Per fixed-size block, draws happen in a fixed order: ages, sexes,
    regions, group-condition presence, recognition flags, non-group
    presence, base spending, then one contribution column per condition.
    """
    if maps is not None:
        spec.validate_against(maps)
    target = spec.target_group()
    group_ids = set(spec.group_condition_ids.get(target, ()))
    conditions = spec.condition_table
    group_idx = [i for i, c in enumerate(conditions) if c.condition_id in group_ids]
    other_idx = [i for i, c in enumerate(conditions) if c.condition_id not in group_ids]
    for i in group_idx:
        c = conditions[i]
        if c.payable and spec.unrecognized_fraction > 0 and not c.unrecognized_emits:
            raise SynthError(
                f"{c.condition_id}: payable group condition needs unrecognized_emits"
            )

    records: list[EnrolleeRecord] = []
    n_blocks = (spec.n + BLOCK_SIZE - 1) // BLOCK_SIZE
    for block in range(n_blocks):
        start = block * BLOCK_SIZE
        size = min(BLOCK_SIZE, spec.n - start)
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, block]))

        ages = rng.integers(18, 65, size=size)
        sexes = rng.integers(0, 2, size=size)
        regions = rng.integers(0, len(REGIONS), size=size)

        present = np.zeros((size, len(conditions)), dtype=bool)
        for i in group_idx:
            present[:, i] = rng.random(size) < conditions[i].prevalence
        member = present[:, group_idx].any(axis=1) if group_idx else np.zeros(size, dtype=bool)
        unrecognized = member & (rng.random(size) < spec.unrecognized_fraction)
        pi = _membership_probability(spec)
        for i in other_idx:
            c = conditions[i]
            p_m, p_nm = _member_adjusted(c.prevalence, c.group_rr, pi)
            present[:, i] = rng.random(size) < np.where(member, p_m, p_nm)

        spend = rng.lognormal(spec.base_spend_mu, spec.base_spend_sigma, size=size)
        for i, c in enumerate(conditions):
            draws = rng.lognormal(c.spend_mu, c.spend_sigma, size=size)
            spend = spend + np.where(present[:, i], draws, 0.0)
        spend = np.maximum(spend, 0.0)

        for row in range(size):
            codes: set[str] = set()
            for i in np.flatnonzero(present[row]):
                c = conditions[int(i)]
                reroute = (
                    unrecognized[row] and int(i) in group_idx and c.unrecognized_emits
                )
                codes.update(c.unrecognized_emits if reroute else c.emits)
            records.append(
                EnrolleeRecord(
                    person_id=f"P{start + row:07d}",
                    age=int(ages[row]),
                    sex="F" if sexes[row] == 0 else "M",
                    region=REGIONS[int(regions[row])],
                    diagnosis_codes=frozenset(codes),
                    spend_total=round(float(spend[row]), 2),
                )
            )
    return records


def _membership_probability(spec: SyntheticSpec) -> float:
    target = spec.target_group()
    pi = 1.0
    for cid in spec.group_condition_ids.get(target, ()):
        pi *= 1.0 - spec.condition(cid).prevalence
    return 1.0 - pi


@dataclass(frozen=True)
class CalibrationReport:
    n: int
    overall_mean_spend: float
    group_mean_spend: float
    group_mean_ratio: float
    group_prevalence: float
    recognized_prevalence: float
    baseline_r2: float
    baseline_adj_r2: float
    net_compensation: float
    nc_over_group_mean: float
    target_group_id: str

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "target_group_id": self.target_group_id,
            "overall_mean_spend": self.overall_mean_spend,
            "group_mean_spend": self.group_mean_spend,
            "group_mean_ratio": self.group_mean_ratio,
            "group_prevalence": self.group_prevalence,
            "recognized_prevalence": self.recognized_prevalence,
            "baseline_r2": self.baseline_r2,
            "baseline_adj_r2": self.baseline_adj_r2,
            "net_compensation": self.net_compensation,
            "nc_over_group_mean": self.nc_over_group_mean,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_text(self) -> str:
        return "\n".join(
            [
                f"records:                 {self.n}",
                f"overall mean spend:      {self.overall_mean_spend:.2f}",
                f"group mean spend:        {self.group_mean_spend:.2f}"
                f"  (ratio {self.group_mean_ratio:.3f})",
                f"group prevalence:        {self.group_prevalence:.4f}",
                f"recognized prevalence:   {self.recognized_prevalence:.4f}",
                f"baseline r2 / adj_r2:    {self.baseline_r2:.4f} / {self.baseline_adj_r2:.4f}",
                f"net compensation:        {self.net_compensation:.2f}"
                f"  ({self.nc_over_group_mean:.3f} of group mean)",
            ]
        )


def calibration_report(
    records,
    maps: CodeMaps,
    groups,
    baseline: Formula,
    banding: AgeBanding | None = None,
    target_group_id: str | None = None,
) -> CalibrationReport:
    """Summary statistics the default scenario is tuned to hit."""
    from .design import DEFAULT_BANDING, build_design
    from .cohort import group_membership

    banding = banding or DEFAULT_BANDING
    group_list = list(groups)
    target = target_group_id or group_list[0].group_id
    target_def = next(g for g in group_list if g.group_id == target)

    y = np.array([r.spend_total for r in records], dtype=np.float64)
    member = group_membership(records, target_def, maps)

    # Recognized: carries a group-related HCC the baseline formula pays for.
    paid = baseline.hcc_ids()
    group_hccs = set()
    for icd, hcc in maps.icd_to_hcc.items():
        if maps.icd_to_ccs.get(icd) in target_def.ccs_categories and hcc in paid:
            group_hccs.add(hcc)
    recognized = 0
    for r in records:
        if assign_hccs(r, maps) & group_hccs:
            recognized += 1

    X = build_design(records, baseline, maps, banding)
    baseline_fit = fit(X, y)
    report = in_sample_report(baseline_fit, X, y, {target: member})
    gm = report.group(target)

    overall_mean = math.fsum(y) / y.size
    return CalibrationReport(
        n=len(records),
        overall_mean_spend=overall_mean,
        group_mean_spend=gm.group_mean_spend,
        group_mean_ratio=gm.group_mean_spend / overall_mean,
        group_prevalence=gm.n_g / len(records),
        recognized_prevalence=recognized / len(records),
        baseline_r2=baseline_fit.r2,
        baseline_adj_r2=baseline_fit.adj_r2,
        net_compensation=gm.net_compensation,
        nc_over_group_mean=gm.net_compensation / gm.group_mean_spend,
        target_group_id=target,
    )


@dataclass(frozen=True)
class CalibrationTargets:
    overall_mean_spend: float = 6619.0
    overall_mean_rtol: float = 0.10
    group_mean_ratio: float = 1.71
    group_mean_ratio_tol: float = 0.10
    group_prevalence: float = 0.138
    group_prevalence_tol: float = 0.010
    recognized_prevalence: float = 0.026
    recognized_prevalence_tol: float = 0.005
    adj_r2_low: float = 0.10
    adj_r2_high: float = 0.16
    nc_fraction_low: float = -0.35
    nc_fraction_high: float = -0.15

    def check(self, report: CalibrationReport) -> list[str]:
        """Names of targets the report misses (empty = calibrated)."""
        misses = []
        if not math.isclose(
            report.overall_mean_spend,
            self.overall_mean_spend,
            rel_tol=self.overall_mean_rtol,
        ):
            misses.append("overall_mean_spend")
        if abs(report.group_mean_ratio - self.group_mean_ratio) > self.group_mean_ratio_tol:
            misses.append("group_mean_ratio")
        if abs(report.group_prevalence - self.group_prevalence) > self.group_prevalence_tol:
            misses.append("group_prevalence")
        if (
            abs(report.recognized_prevalence - self.recognized_prevalence)
            > self.recognized_prevalence_tol
        ):
            misses.append("recognized_prevalence")
        if not self.adj_r2_low <= report.baseline_adj_r2 <= self.adj_r2_high:
            misses.append("baseline_adj_r2")
        if not self.nc_fraction_low <= report.nc_over_group_mean <= self.nc_fraction_high:
            misses.append("nc_over_group_mean")
        return misses


@dataclass(frozen=True)
class TuneOutcome:
    spec: SyntheticSpec
    success: bool
    report: CalibrationReport
    iterations: int
    binding_constraint: str | None = None


def tune(
    spec: SyntheticSpec,
    maps: CodeMaps,
    groups,
    baseline: Formula,
    targets: CalibrationTargets | None = None,
    max_iters: int = 8,
    banding: AgeBanding | None = None,
) -> TuneOutcome:
    """Coordinate-wise closed-form nudges toward the calibration targets.

    Means move through lognormal mu shifts (mean = exp(mu + sigma^2/2), so a
    factor f is a +ln f shift); prevalences scale multiplicatively; the
    recognition share moves through unrecognized_fraction. R^2 and the net
    compensation fraction have no dedicated knob here: if everything else
    converges and they are still out of band, that constraint is reported as
    binding.
    """
    targets = targets or CalibrationTargets()
    current = spec
    target_gid = current.target_group()

    report = calibration_report(
        generate(current, maps), maps, groups, baseline, banding, target_gid
    )
    misses = targets.check(report)
    if not misses:
        return TuneOutcome(current, True, report, 0)

    for iteration in range(1, max_iters + 1):
        group_cids = set(current.group_condition_ids[target_gid])

        # Prevalence: scale group-condition prevalences toward the target.
        scale = targets.group_prevalence / max(report.group_prevalence, 1e-9)
        new_conditions = []
        for c in current.condition_table:
            if c.condition_id in group_cids:
                p = min(c.prevalence * scale, 0.95)
                new_conditions.append(replace(c, prevalence=p))
            else:
                new_conditions.append(c)
        current = replace(current, condition_table=tuple(new_conditions))

        # Recognition: recognized ~= coded share of group prevalence.
        pi = _membership_probability(current)
        if targets.recognized_prevalence >= pi:
            return TuneOutcome(
                current,
                False,
                report,
                iteration,
                binding_constraint=(
                    "recognized_prevalence exceeds group_prevalence; "
                    "no unrecognized_fraction can reach it"
                ),
            )
        if report.recognized_prevalence > 0:
            coded = 1.0 - current.unrecognized_fraction
            want = coded * targets.recognized_prevalence / report.recognized_prevalence
            current = replace(
                current, unrecognized_fraction=min(max(1.0 - want, 0.0), 1.0)
            )

        # Overall mean: shift every mu by ln(factor), preserving ratios.
        factor = targets.overall_mean_spend / report.overall_mean_spend
        shift = math.log(factor)
        current = replace(
            current,
            base_spend_mu=current.base_spend_mu + shift,
            condition_table=tuple(
                replace(c, spend_mu=c.spend_mu + shift) for c in current.condition_table
            ),
        )

        # Group ratio: move only group-condition mus by the extra-spend gap.
        gap_have = report.group_mean_spend - report.overall_mean_spend
        gap_want = (targets.group_mean_ratio - 1.0) * targets.overall_mean_spend
        if gap_have > 0 and gap_want > 0:
            gshift = math.log(gap_want / (gap_have * factor)) if gap_have * factor > 0 else 0.0
            gshift = min(max(gshift, -0.5), 0.5)
            current = replace(
                current,
                condition_table=tuple(
                    replace(c, spend_mu=c.spend_mu + gshift)
                    if c.condition_id in group_cids
                    else c
                    for c in current.condition_table
                ),
            )

        report = calibration_report(
            generate(current, maps), maps, groups, baseline, banding, target_gid
        )
        misses = targets.check(report)
        if not misses:
            return TuneOutcome(current, True, report, iteration)

    untunable = [m for m in misses if m in ("baseline_adj_r2", "nc_over_group_mean")]
    binding = untunable[0] if untunable else misses[0]
    return TuneOutcome(current, False, report, max_iters, binding_constraint=binding)
