/**
 * Session controller: one workbench per tab, holding the last-seen
 * revision and replaying it on every mutation so the server can reject
 * stale writers. Reads refresh the whole view; a failed read keeps the
 * previous data on screen behind a stale badge and a non-blocking
 * banner. A 409 on commit/undo switches the UI into a refresh-prompt
 * state instead of retrying, leaving the decision to the analyst.
 */

import { ApiClient, ApiError, RejectedError, StaleRevisionError } from "./api.js";
import {
  buildCards,
  disableCard,
  sortCards,
  type CandidateCard,
} from "./cards.js";
import {
  renderBanner,
  renderCandidateList,
  renderFormulaList,
  renderMetricPanel,
  renderRefreshPrompt,
  renderStaleBadge,
} from "./panel.js";
import { buildTraceGraph, renderTraceGraph } from "./trace.js";
import type {
  FormulaDoc,
  MetricReportDoc,
  PolicyDoc,
  SessionRequest,
  TraceDoc,
} from "./types.js";

export interface WorkbenchState {
  phase: "idle" | "loading" | "ready" | "error";
  sessionId: string | null;
  revision: number;
  policyLabel: string | null;
  mode: string | null;
  formula: FormulaDoc | null;
  report: MetricReportDoc | null;
  cards: CandidateCard[];
  trace: TraceDoc | null;
  banner: string | null;
  stale: boolean;
  refreshPrompt: boolean;
}

type Listener = (state: WorkbenchState) => void;

export interface WorkbenchOptions {
  /**
   * Policy document the session is opened with. Kept locally so cards can
   * be ordered by the policy's own scalar; a plain path/name string still
   * works but leaves candidates in server order.
   */
  policy?: PolicyDoc | string;
}

export class Workbench {
  private readonly client: ApiClient;
  private readonly policyDoc: PolicyDoc | null;
  private readonly policyRef: PolicyDoc | string | undefined;
  private readonly listeners: Listener[] = [];
  private state_: WorkbenchState = {
    phase: "idle",
    sessionId: null,
    revision: -1,
    policyLabel: null,
    mode: null,
    formula: null,
    report: null,
    cards: [],
    trace: null,
    banner: null,
    stale: false,
    refreshPrompt: false,
  };

  constructor(client: ApiClient, options: WorkbenchOptions = {}) {
    this.client = client;
    this.policyRef = options.policy;
    this.policyDoc = typeof options.policy === "object" ? options.policy : null;
  }

  get state(): WorkbenchState {
    return this.state_;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      const i = this.listeners.indexOf(listener);
      if (i >= 0) this.listeners.splice(i, 1);
    };
  }

  private set(patch: Partial<WorkbenchState>): void {
    this.state_ = { ...this.state_, ...patch };
    for (const listener of this.listeners) listener(this.state_);
  }

  private sessionIdOrThrow(): string {
    if (this.state_.sessionId === null) throw new Error("no open session");
    return this.state_.sessionId;
  }

  /** Open a session and load the first candidate set and trace. */
  async open(request: SessionRequest = {}): Promise<void> {
    this.set({ phase: "loading", banner: null });
    try {
      const session = await this.client.createSession({
        ...request,
        policy: request.policy ?? this.policyRef,
      });
      this.set({
        phase: "ready",
        sessionId: session.session_id,
        revision: session.revision,
        policyLabel: session.policy,
        mode: session.mode,
        formula: session.formula,
        report: session.report,
        stale: false,
        refreshPrompt: false,
      });
      await this.loadCandidates();
      await this.loadTrace();
    } catch (err) {
      this.set({ phase: "error", banner: describe(err) });
      throw err;
    }
  }

  /** Refetch candidates; on failure keep the old cards behind a badge. */
  async loadCandidates(): Promise<void> {
    const report = this.state_.report;
    if (report === null) return;
    try {
      const response = await this.client.candidates(this.sessionIdOrThrow());
      const cards = sortCards(buildCards(response.candidates, report), this.policyDoc);
      this.set({ cards, policyLabel: response.policy });
    } catch (err) {
      this.set({ stale: true, banner: describe(err) });
    }
  }

  async loadTrace(): Promise<void> {
    try {
      const response = await this.client.trace(this.sessionIdOrThrow());
      this.set({ trace: response.trace });
    } catch (err) {
      this.set({ stale: true, banner: describe(err) });
    }
  }

  /**
   * Commit one previewed card by its label, sending the held revision.
   * 409 flips the refresh prompt; 422 disables just that card with the
   * server's reason. Both leave the rest of the view usable.
   */
  async commit(label: string): Promise<void> {
    const card = this.state_.cards.find((c) => c.label === label);
    if (card === undefined) {
      this.set({ banner: `no candidate ${label} on screen` });
      return;
    }
    if (card.disabled) return;
    try {
      const response = await this.client.commitStep(
        this.sessionIdOrThrow(),
        card.action,
        this.state_.revision,
      );
      this.set({
        revision: response.revision,
        formula: response.formula,
        report: response.report,
        banner: null,
        stale: false,
        refreshPrompt: false,
      });
      await this.loadCandidates();
      await this.loadTrace();
    } catch (err) {
      if (err instanceof StaleRevisionError) {
        this.set({ stale: true, refreshPrompt: true, banner: err.detail });
        return;
      }
      if (err instanceof RejectedError) {
        this.set({
          cards: disableCard(this.state_.cards, label, err.detail),
          banner: err.detail,
        });
        return;
      }
      this.set({ stale: true, banner: describe(err) });
    }
  }

  /** Roll back the last committed step; the server restores exactly. */
  async undo(): Promise<void> {
    try {
      const response = await this.client.undo(this.sessionIdOrThrow(), this.state_.revision);
      this.set({
        revision: response.revision,
        formula: response.formula,
        report: response.report,
        banner: null,
        stale: false,
        refreshPrompt: false,
      });
      await this.loadCandidates();
      await this.loadTrace();
    } catch (err) {
      if (err instanceof StaleRevisionError) {
        this.set({ stale: true, refreshPrompt: true, banner: err.detail });
        return;
      }
      if (err instanceof RejectedError) {
        this.set({ banner: err.detail });
        return;
      }
      this.set({ stale: true, banner: describe(err) });
    }
  }

  /** Adopt whatever the server has now; clears the stale/refresh state. */
  async refresh(): Promise<void> {
    try {
      const response = await this.client.formula(this.sessionIdOrThrow());
      this.set({
        revision: response.revision,
        formula: response.formula,
        report: response.report,
        banner: null,
        stale: false,
        refreshPrompt: false,
      });
      await this.loadCandidates();
      await this.loadTrace();
    } catch (err) {
      this.set({ stale: true, banner: describe(err) });
    }
  }

  /** Full-view HTML for the browser shell. */
  render(): string {
    const s = this.state_;
    if (s.phase === "idle" || s.phase === "loading") {
      return `<div class="loading">loading session&hellip;</div>`;
    }
    if (s.phase === "error" || s.report === null || s.formula === null) {
      return renderBanner(s.banner ?? "session failed to open");
    }
    const header =
      `<header class="workbench-header">` +
      `<span class="policy">policy: ${s.policyLabel ?? ""}</span>` +
      `<span class="revision">rev ${s.revision}</span>` +
      renderStaleBadge(s.stale) +
      `<button data-undo="1">undo</button>` +
      `</header>`;
    const graph = s.trace === null ? "" : renderTraceGraph(buildTraceGraph(s.trace));
    return (
      renderBanner(s.banner) +
      renderRefreshPrompt(s.refreshPrompt) +
      header +
      renderFormulaList(s.formula) +
      renderMetricPanel(s.report) +
      renderCandidateList(s.cards) +
      `<section class="trace-panel">${graph}</section>`
    );
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.detail;
  return err instanceof Error ? err.message : String(err);
}
