"""The shipped synthetic scenario: a fixed 200k-person population whose
baseline formula underpays a mental-health-and-substance-use-like group.

Five conditions define the group. The MH and SUD pairs each have a payable
ICD (HCC in the baseline formula) and a non-payable variant (HCC available
to add); a severity condition codes to CCS only and stays unpayable under
every formula, which keeps net compensation below zero even after both
pairs are added. Liver-like and kidney-like conditions sit in the baseline
formula with opposite group correlations: liver is concentrated in the
group (removing it barely moves r2 but widens the underpayment) while
kidney is depleted in the group (removing it costs real r2 but narrows the
underpayment). Four broad chronic conditions with mild group enrichment
carry the bulk of the baseline fit.

All constants here are published fixture values; regenerating with the same
seed reproduces the population bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cohort import CodeMaps, EnrolleeRecord, GroupDefinition, HierarchyRule
from .design import AgeBanding, Formula, demographic_formula, hcc_variable
from .stepwise import (
    CandidateBlock,
    SelectionPolicy,
    StepwiseProblem,
    build_problem,
    max_r2_policy,
    net_comp_policy,
)
from .synthpop import ConditionSpec, SyntheticSpec, generate

SCENARIO_NAME = "figure1-default"
SCENARIO_SEED = 1301
SCENARIO_N = 200_000
TARGET_GROUP = "mhsud_like"
MIN_GAIN = 0.002

SCENARIO_BANDING = AgeBanding(
    (
        (0, 17),
        (18, 24),
        (25, 29),
        (30, 34),
        (35, 39),
        (40, 44),
        (45, 49),
        (50, 54),
        (55, 59),
        (60, 64),
        (65, None),
    )
)
REFERENCE_CELL = "F_18_24"

BASELINE_HCCS = (
    "H_MHA",
    "H_MHB",
    "H_SUDA",
    "H_SUDB",
    "H_DIAB",
    "H_HEART",
    "H_ARTH",
    "H_PULM",
    "H_LIVER",
    "H_KIDNEY",
)


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: SyntheticSpec
    maps: CodeMaps
    groups: tuple[GroupDefinition, ...]
    banding: AgeBanding
    reference_cell: str
    baseline: Formula
    pool: tuple[CandidateBlock, ...]
    target_group_id: str

    def generate(self) -> list[EnrolleeRecord]:
        return generate(self.spec, self.maps)

    def policies(self) -> tuple[SelectionPolicy, SelectionPolicy]:
        return (
            max_r2_policy(min_gain=MIN_GAIN, parsimony_tiebreak=True, name="max_r2"),
            net_comp_policy(self.target_group_id, name="net_comp_toward_zero"),
        )

    def problem(self, records: list[EnrolleeRecord]) -> StepwiseProblem:
        return build_problem(
            records, self.baseline, self.pool, self.maps, self.groups, self.banding
        )


def scenario_maps() -> CodeMaps:
    icd_to_hcc = {
        "MHA_P": "H_MHA",
        "MHA_U": "H_MHA_X",
        "MHB_P": "H_MHB",
        "MHB_U": "H_MHB_X",
        "SUDA_P": "H_SUDA",
        "SUDA_U": "H_SUDA_X",
        "SUDB_P": "H_SUDB",
        "SUDB_U": "H_SUDB_X",
        "LIV_P": "H_LIVER",
        "KID_P": "H_KIDNEY",
        "KID_M": "H_KIDNEY_LOW",
        "DIA_P": "H_DIAB",
        "HRT_P": "H_HEART",
        "ART_P": "H_ARTH",
        "PUL_P": "H_PULM",
    }
    icd_to_ccs = {
        "MHA_P": "C_MHA",
        "MHA_U": "C_MHA",
        "MHB_P": "C_MHB",
        "MHB_U": "C_MHB",
        "SUDA_P": "C_SUDA",
        "SUDA_U": "C_SUDA",
        "SUDB_P": "C_SUDB",
        "SUDB_U": "C_SUDB",
        "SEV_U": "C_SEV",
        "LIV_P": "C_LIVER",
        "KID_P": "C_KIDNEY",
        "KID_M": "C_KIDNEY",
        "DIA_P": "C_DIAB",
        "HRT_P": "C_HEART",
        "ART_P": "C_ARTH",
        "PUL_P": "C_PULM",
    }
    hierarchies = (HierarchyRule("H_KIDNEY", frozenset({"H_KIDNEY_LOW"})),)
    payment = (
        "H_MHA",
        "H_MHA_X",
        "H_MHB",
        "H_MHB_X",
        "H_SUDA",
        "H_SUDA_X",
        "H_SUDB",
        "H_SUDB_X",
        "H_LIVER",
        "H_KIDNEY",
        "H_KIDNEY_LOW",
        "H_DIAB",
        "H_HEART",
        "H_ARTH",
        "H_PULM",
    )
    return CodeMaps(icd_to_hcc, icd_to_ccs, hierarchies, payment)


def scenario_groups() -> tuple[GroupDefinition, ...]:
    return (
        GroupDefinition(
            TARGET_GROUP, frozenset({"C_MHA", "C_MHB", "C_SUDA", "C_SUDB", "C_SEV"})
        ),
        GroupDefinition("liver_like", frozenset({"C_LIVER"})),
        GroupDefinition("kidney_like", frozenset({"C_KIDNEY"})),
    )


def scenario_spec() -> SyntheticSpec:
    conditions = (
        ConditionSpec(
            "mh_a", 0.0305, ("MHA_P",), True, 8.3197, 0.8, unrecognized_emits=("MHA_U",)
        ),
        ConditionSpec(
            "mh_b", 0.0305, ("MHB_P",), True, 8.3197, 0.8, unrecognized_emits=("MHB_U",)
        ),
        ConditionSpec(
            "sud_a", 0.0305, ("SUDA_P",), True, 6.0769, 0.8, unrecognized_emits=("SUDA_U",)
        ),
        ConditionSpec(
            "sud_b", 0.0305, ("SUDB_P",), True, 6.0769, 0.8, unrecognized_emits=("SUDB_U",)
        ),
        ConditionSpec("mh_sev", 0.024, ("SEV_U",), False, 8.2364, 0.8),
        ConditionSpec("liver", 0.004, ("LIV_P",), True, 7.6864, 0.8, group_rr=8.0),
        ConditionSpec("kidney", 0.028, ("KID_P", "KID_M"), True, 8.3795, 0.8, group_rr=0.3),
        ConditionSpec("diabetes", 0.08, ("DIA_P",), True, 8.2945, 0.9, group_rr=3.0),
        ConditionSpec("heart", 0.06, ("HRT_P",), True, 8.4487, 0.9, group_rr=2.8),
        ConditionSpec("arthritis", 0.10, ("ART_P",), True, 7.7555, 0.9, group_rr=1.6),
        ConditionSpec("pulmonary", 0.07, ("PUL_P",), True, 7.8890, 0.9, group_rr=2.4),
    )
    return SyntheticSpec(
        n=SCENARIO_N,
        seed=SCENARIO_SEED,
        condition_table=conditions,
        base_spend_mu=7.7110,
        base_spend_sigma=1.17,
        group_condition_ids={
            TARGET_GROUP: ("mh_a", "mh_b", "sud_a", "sud_b", "mh_sev"),
            "liver_like": ("liver",),
            "kidney_like": ("kidney",),
        },
        unrecognized_fraction=0.8,
        target_group_id=TARGET_GROUP,
    )


def scenario_baseline() -> Formula:
    formula = demographic_formula(SCENARIO_BANDING, REFERENCE_CELL)
    for hcc in BASELINE_HCCS:
        formula = formula.adding(hcc_variable(hcc))
    return formula


def scenario_pool() -> tuple[CandidateBlock, ...]:
    return (
        CandidateBlock("mh_pair", (hcc_variable("H_MHA_X"), hcc_variable("H_MHB_X"))),
        CandidateBlock("sud_pair", (hcc_variable("H_SUDA_X"), hcc_variable("H_SUDB_X"))),
        CandidateBlock("liver_block", (hcc_variable("H_LIVER"),)),
        CandidateBlock("kidney_block", (hcc_variable("H_KIDNEY"),)),
    )


def figure1_default() -> Scenario:
    maps = scenario_maps()
    spec = scenario_spec()
    spec.validate_against(maps)
    return Scenario(
        name=SCENARIO_NAME,
        spec=spec,
        maps=maps,
        groups=scenario_groups(),
        banding=SCENARIO_BANDING,
        reference_cell=REFERENCE_CELL,
        baseline=scenario_baseline(),
        pool=scenario_pool(),
        target_group_id=TARGET_GROUP,
    )
