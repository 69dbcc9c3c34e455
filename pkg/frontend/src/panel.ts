/**
 * HTML renderers for the workbench: metric panel, candidate cards, error
 * banner. Pure string builders so they are testable without a DOM; the
 * browser shell assigns the output to innerHTML.
 *
 * Every numeric cell carries the untouched API value in a data-full
 * attribute; the visible text is a shortened rendering of that same
 * value. Nothing here does arithmetic on server numbers.
 */

import type { CandidateCard, GroupDelta } from "./cards.js";
import type { FormulaDoc, MetricReportDoc } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Shortened display text plus the verbatim value for the tooltip/tests. */
function num(value: number | null, display: (x: number) => string): string {
  if (value === null) {
    return `<span class="num none" data-full="null">n/a</span>`;
  }
  return `<span class="num" data-full="${String(value)}">${display(value)}</span>`;
}

const r2Text = (x: number) => x.toPrecision(6);
const relText = (x: number) => `${(x * 100).toPrecision(3)}%`;
const moneyText = (x: number) => `$${x.toFixed(2)}`;
const pText = (x: number) => x.toPrecision(3);

export function renderFormulaList(formula: FormulaDoc): string {
  const chips = formula.variables
    .map(
      (v) =>
        `<span class="chip chip-${v.kind}" title="${escapeHtml(v.kind)}">${escapeHtml(v.key)}</span>`,
    )
    .join("");
  return `<div class="formula-list" data-count="${formula.variables.length}">${chips}</div>`;
}

/**
 * Fit statistics and per-group net compensation. Groups with negative
 * net compensation get the underpaid flag; that is the condition the
 * fairness policy exists to repair.
 */
export function renderMetricPanel(report: MetricReportDoc): string {
  const rows = Object.keys(report.groups)
    .sort()
    .map((gid) => {
      const g = report.groups[gid]!;
      const underpaid = g.net_compensation < 0;
      return (
        `<tr class="group-row${underpaid ? " underpaid" : ""}" data-group="${escapeHtml(gid)}">` +
        `<td>${escapeHtml(gid)}${underpaid ? '<span class="flag-underpaid">underpaid</span>' : ""}</td>` +
        `<td>${g.n_g}</td>` +
        `<td>${num(g.group_mean_spend, moneyText)}</td>` +
        `<td>${num(g.net_compensation, moneyText)}</td>` +
        `<td>${num(g.predictive_ratio, r2Text)}</td>` +
        `</tr>`
      );
    })
    .join("");
  const caveat = report.naive_p_values
    ? `<p class="caveat">p-values are full-data and carry no selection adjustment</p>`
    : "";
  return (
    `<section class="metric-panel" data-mode="${report.mode}">` +
    `<dl class="fit-stats">` +
    `<dt>r2</dt><dd>${num(report.r2, r2Text)}</dd>` +
    `<dt>adj r2</dt><dd>${num(report.adj_r2, r2Text)}</dd>` +
    `</dl>` +
    `<table class="group-table">` +
    `<thead><tr><th>group</th><th>n</th><th>mean spend</th><th>net comp</th><th>pred ratio</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>${caveat}</section>`
  );
}

function renderGroupDelta(delta: GroupDelta): string {
  const direction = delta.towardZero ? "toward-zero" : "away-from-zero";
  const tone = delta.improvement ? " improvement" : "";
  const arrow = delta.towardZero ? "&rarr;0" : "&larr;0";
  return (
    `<li class="group-delta ${direction}${tone}" data-group="${escapeHtml(delta.groupId)}">` +
    `<span class="gname">${escapeHtml(delta.groupId)}</span> ` +
    `${num(delta.ncBefore, moneyText)} &rarr; ${num(delta.ncAfter, moneyText)} ` +
    `<span class="delta">(${num(delta.ncAbs, moneyText)})</span> ` +
    `<span class="direction">${arrow}</span></li>`
  );
}

export function renderCandidateCard(card: CandidateCard): string {
  const hintClass = card.hint.accept ? "hint-accept" : "hint-reject";
  const hintWord = card.hint.accept ? "policy accepts" : "policy rejects";
  const disabledAttr = card.disabled ? ` aria-disabled="true"` : "";
  const disabledNote = card.disabled
    ? `<p class="disabled-reason">${escapeHtml(card.disabledReason ?? "unavailable")}</p>`
    : "";
  const aliasNote = card.allAddedAliased
    ? `<p class="alias-note">all added columns aliased</p>`
    : "";
  return (
    `<article class="candidate-card ${card.kind}${card.disabled ? " disabled" : ""}"` +
    ` data-label="${escapeHtml(card.label)}"${disabledAttr}>` +
    `<header><span class="label">${escapeHtml(card.label)}</span>` +
    `<span class="hint ${hintClass}" title="${escapeHtml(card.hint.reason)}">${hintWord}</span></header>` +
    `<dl class="card-stats">` +
    `<dt>&Delta;r2</dt><dd>${num(card.r2Abs, r2Text)} <span class="rel">(${num(card.r2Rel, relText)})</span></dd>` +
    `<dt>&Delta;adj r2</dt><dd>${num(card.adjR2Abs, r2Text)} <span class="rel">(${num(card.adjR2Rel, relText)})</span></dd>` +
    `<dt>min added p</dt><dd>${num(card.minAddedP, pText)}</dd>` +
    `</dl>` +
    `<ul class="group-deltas">${card.groupDeltas.map(renderGroupDelta).join("")}</ul>` +
    aliasNote +
    disabledNote +
    `<button class="commit" data-commit="${escapeHtml(card.label)}"${card.disabled ? " disabled" : ""}>commit</button>` +
    `</article>`
  );
}

export function renderCandidateList(cards: CandidateCard[]): string {
  if (cards.length === 0) {
    return (
      `<div class="empty-state">` +
      `<h3>No candidate steps</h3>` +
      `<p>Every pool block is either partially applied or the pool is empty; ` +
      `there is nothing to propose from here.</p></div>`
    );
  }
  return `<div class="candidate-list">${cards.map(renderCandidateCard).join("")}</div>`;
}

/** Non-blocking problem banner; empty string when there is nothing to say. */
export function renderBanner(message: string | null): string {
  if (!message) return "";
  return `<div class="banner error" role="alert">${escapeHtml(message)}</div>`;
}

/** Shown while the client knows its view may lag the server. */
export function renderStaleBadge(stale: boolean): string {
  if (!stale) return "";
  return `<span class="stale-badge" title="another writer moved the session">stale data</span>`;
}

export function renderRefreshPrompt(show: boolean): string {
  if (!show) return "";
  return (
    `<div class="refresh-prompt">` +
    `<p>This session changed elsewhere. Reload the current state before committing.</p>` +
    `<button data-refresh="1">refresh</button></div>`
  );
}
