"""Risk-adjustment formula workbench: stepwise building of health-plan
payment formulas evaluated on global fit and group net compensation."""

from .cohort import (
    REASON_MISSING_CLAIMS,
    REASON_MISSING_REGION,
    REASON_NEGATIVE_CLAIMS,
    CodeMaps,
    CohortError,
    EnrolleeRecord,
    ExclusionReport,
    GroupDefinition,
    HierarchyRule,
    IngestionError,
    UnmappedCodeError,
    apply_exclusions,
    assign_ccs,
    assign_hccs,
    group_membership,
    load_code_maps,
    load_enrollees,
    write_enrollees,
)
from .design import (
    DEFAULT_BANDING,
    AgeBanding,
    DesignError,
    DesignMatrix,
    Formula,
    INTERCEPT,
    VariableId,
    VariableKind,
    age_sex_cell,
    age_sex_variable,
    build_design,
    check_cell_partition,
    demographic_formula,
    hcc_variable,
    with_column,
    without_column,
)
from .metrics import (
    GroupMetrics,
    MetricReport,
    MetricsError,
    assign_folds,
    cross_validated_report,
    in_sample_report,
    net_compensation,
    predictive_ratio,
    report_rows,
)
from .ols import (
    AliasedPivotError,
    CrossProduct,
    FitResult,
    OlsError,
    SweepState,
    VariableInference,
    cross_product,
    fit,
    predict,
    refit_add,
    refit_remove,
    sweep,
)
from .bundles import (
    Bundle,
    BundleError,
    formula_from_doc,
    formula_to_doc,
    groups_from_doc,
    groups_to_doc,
    load_bundle,
    policy_from_doc,
    pool_from_doc,
    pool_to_doc,
    write_bundle,
)
from .scenario import Scenario, figure1_default
from .stepwise import (
    CandidateBlock,
    DecisionTrace,
    EvaluationMode,
    MaxR2,
    NetCompTowardZero,
    PValueGate,
    PolicyComparison,
    SelectionPolicy,
    StepAction,
    StepKind,
    StepwiseError,
    StepwiseProblem,
    StepwiseResult,
    build_problem,
    compare_policies,
    evaluate_step,
    gated_r2_policy,
    make_evaluator,
    max_r2_policy,
    net_comp_policy,
    accepted_steps_from_json,
    apply_action,
    propose_steps,
    replay,
    run_stepwise,
)
from .synthpop import (
    CalibrationReport,
    CalibrationTargets,
    ConditionSpec,
    SynthError,
    SyntheticSpec,
    TuneOutcome,
    calibration_report,
    generate,
    tune,
)

__version__ = "0.1.0"
