/**
 * JSON document shapes of the fairstep session API, transcribed field for
 * field. The UI never computes a statistic: every number it shows is one
 * of these fields, so the types double as the contract inventory.
 */

export type VariableKind = "intercept" | "age_sex" | "hcc" | "indicator";

export interface VariableDoc {
  kind: VariableKind;
  key: string;
}

/** Age band edges; upper bound null means open-ended. */
export type BandDoc = [number, number | null];

export interface FormulaDoc {
  banding: BandDoc[];
  variables: VariableDoc[];
}

export interface VariableInferenceDoc {
  variable: VariableDoc;
  coefficient: number;
  std_error: number | null;
  t_stat: number | null;
  p_value: number | null;
  aliased: boolean;
}

export interface GroupMetricsDoc {
  group_id: string;
  n_g: number;
  group_mean_spend: number;
  net_compensation: number;
  predictive_ratio: number;
}

export interface MetricReportDoc {
  mode: "in_sample" | "cross_validated";
  folds: number | null;
  seed: number | null;
  r2: number;
  adj_r2: number | null;
  naive_p_values: boolean;
  per_variable: VariableInferenceDoc[];
  groups: Record<string, GroupMetricsDoc>;
}

export type StepKind = "add" | "remove";

export interface ActionDoc {
  kind: StepKind;
  variables: string[];
  block_id: string | null;
}

export interface StepDeltasDoc {
  r2_abs: number;
  r2_rel: number | null;
  adj_r2_abs: number | null;
  adj_r2_rel: number | null;
  nc_abs: Record<string, number>;
  nc_rel: Record<string, number | null>;
  added_p_values: Record<string, number | null>;
  min_added_p: number | null;
  all_added_aliased: boolean;
}

export interface PolicyHint {
  accept: boolean;
  reason: string;
}

/** One candidate step as served by GET /sessions/{id}/candidates. */
export interface CandidatePayload {
  action: ActionDoc;
  label: string;
  deltas: StepDeltasDoc;
  report_after: MetricReportDoc;
  policy_hint: PolicyHint;
}

export interface CandidatesResponse {
  revision: number;
  policy: string;
  candidates: CandidatePayload[];
}

export interface TraceEntryDoc {
  index: number;
  action: ActionDoc;
  accepted: boolean;
  reason: string;
  evaluations_before: number;
  accepted_before: number;
  p_value_caveat: string;
  report_before: MetricReportDoc;
  report_after: MetricReportDoc;
}

export interface TraceDoc {
  /** bare variable list; trace baselines carry no banding block */
  baseline: { variables: VariableDoc[] };
  entries: TraceEntryDoc[];
}

export interface TraceResponse {
  revision: number;
  trace: TraceDoc;
}

export interface SessionResponse {
  session_id: string;
  revision: number;
  policy: string;
  mode: string;
  formula: FormulaDoc;
  report: MetricReportDoc;
}

export interface FormulaResponse {
  revision: number;
  formula: FormulaDoc;
  report: MetricReportDoc;
}

export interface CommitResponse {
  revision: number;
  committed: TraceEntryDoc;
  deltas: StepDeltasDoc;
  formula: FormulaDoc;
  report: MetricReportDoc;
}

export interface UndoResponse {
  revision: number;
  undone: ActionDoc;
  formula: FormulaDoc;
  report: MetricReportDoc;
}

export interface MetaResponse {
  name: string;
  version: string;
  api: number;
  default_bundle: string | null;
  sessions: string[];
}

/**
 * Selection policy document. kind picks the objective; group_id is set for
 * fairness policies and names the group whose net compensation the policy
 * steers toward zero.
 */
export interface PolicyDoc {
  name?: string;
  kind: string;
  group_id?: string;
  min_gain?: number;
  alpha?: number;
  parsimony_tiebreak?: boolean;
  evaluation?: { mode: string; folds?: number; seed?: number };
}

export interface DefaultsResponse {
  bundle: string | null;
  baseline?: FormulaDoc;
  pool?: { blocks: { block_id: string; variables: VariableDoc[] }[] };
  groups?: { groups: { group_id: string; ccs_categories: string[] }[] };
  policies?: Record<string, PolicyDoc>;
}

export interface SessionRequest {
  bundle?: string;
  baseline?: FormulaDoc | string;
  groups?: object | string;
  policy?: PolicyDoc | string;
  pool?: object | string;
}
