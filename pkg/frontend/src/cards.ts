/**
 * Candidate card model. A card is a view over one entry of the
 * GET /candidates payload plus the session report it was previewed
 * against. Every number on the card is copied verbatim from those two
 * documents; the only things computed here are booleans (direction
 * indicators) and sort order.
 */

import type {
  ActionDoc,
  CandidatePayload,
  MetricReportDoc,
  PolicyDoc,
  PolicyHint,
  StepDeltasDoc,
} from "./types.js";

/** Net-compensation movement of one group under a candidate step. */
export interface GroupDelta {
  groupId: string;
  /** groups[g].net_compensation of the current session report. */
  ncBefore: number;
  /** groups[g].net_compensation of the card's report_after. */
  ncAfter: number;
  /** deltas.nc_abs[g], the change the server computed. */
  ncAbs: number;
  /** deltas.nc_rel[g]; null when the previous value was zero. */
  ncRel: number | null;
  /** |after| < |before|: the step moves this group toward zero. */
  towardZero: boolean;
  /**
   * Toward-zero counts as an improvement only while the group is at or
   * below zero (underpaid); shrinking an overpayment back toward zero is
   * shown neutrally, never as a gain.
   */
  improvement: boolean;
}

export interface CandidateCard {
  label: string;
  action: ActionDoc;
  kind: "add" | "remove";
  blockId: string | null;
  r2Abs: number;
  r2Rel: number | null;
  adjR2Abs: number | null;
  adjR2Rel: number | null;
  minAddedP: number | null;
  addedPValues: Record<string, number | null>;
  allAddedAliased: boolean;
  groupDeltas: GroupDelta[];
  hint: PolicyHint;
  deltas: StepDeltasDoc;
  reportAfter: MetricReportDoc;
  disabled: boolean;
  disabledReason: string | null;
}

export function buildCard(payload: CandidatePayload, before: MetricReportDoc): CandidateCard {
  const groupDeltas: GroupDelta[] = [];
  for (const groupId of Object.keys(payload.deltas.nc_abs).sort()) {
    const beforeMetrics = before.groups[groupId];
    const afterMetrics = payload.report_after.groups[groupId];
    if (beforeMetrics === undefined || afterMetrics === undefined) {
      throw new Error(`group ${groupId} in deltas but missing from a report`);
    }
    const ncBefore = beforeMetrics.net_compensation;
    const ncAfter = afterMetrics.net_compensation;
    const towardZero = Math.abs(ncAfter) < Math.abs(ncBefore);
    groupDeltas.push({
      groupId,
      ncBefore,
      ncAfter,
      ncAbs: payload.deltas.nc_abs[groupId]!,
      ncRel: payload.deltas.nc_rel[groupId] ?? null,
      towardZero,
      improvement: towardZero && ncBefore <= 0,
    });
  }
  return {
    label: payload.label,
    action: payload.action,
    kind: payload.action.kind,
    blockId: payload.action.block_id,
    r2Abs: payload.deltas.r2_abs,
    r2Rel: payload.deltas.r2_rel,
    adjR2Abs: payload.deltas.adj_r2_abs,
    adjR2Rel: payload.deltas.adj_r2_rel,
    minAddedP: payload.deltas.min_added_p,
    addedPValues: payload.deltas.added_p_values,
    allAddedAliased: payload.deltas.all_added_aliased,
    groupDeltas,
    hint: payload.policy_hint,
    deltas: payload.deltas,
    reportAfter: payload.report_after,
    disabled: false,
    disabledReason: null,
  };
}

export function buildCards(payloads: CandidatePayload[], before: MetricReportDoc): CandidateCard[] {
  return payloads.map((p) => buildCard(p, before));
}

/**
 * Scalar the active policy ranks candidates by, higher is better. Used
 * only for ordering, never displayed. Fairness policies rank by how much
 * the target group's |net compensation| shrinks; everything else ranks
 * by the r2 change.
 */
export function policySortKey(card: CandidateCard, policy: PolicyDoc | null): number {
  if (policy?.kind === "net_comp_toward_zero" && policy.group_id) {
    const delta = card.groupDeltas.find((g) => g.groupId === policy.group_id);
    if (delta !== undefined) {
      return Math.abs(delta.ncBefore) - Math.abs(delta.ncAfter);
    }
  }
  return card.r2Abs;
}

/** Stable descending sort by the active policy's scalar. */
export function sortCards(cards: CandidateCard[], policy: PolicyDoc | null): CandidateCard[] {
  return [...cards].sort((a, b) => policySortKey(b, policy) - policySortKey(a, policy));
}

/** Mark one card unusable, keeping the server's reason for display. */
export function disableCard(cards: CandidateCard[], label: string, reason: string): CandidateCard[] {
  return cards.map((c) =>
    c.label === label ? { ...c, disabled: true, disabledReason: reason } : c,
  );
}
