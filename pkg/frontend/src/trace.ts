/**
 * Decision-trace graph: the committed step sequence drawn as a chain of
 * state nodes joined by action edges. One node per formula state, so the
 * node count is always committed steps plus one (the baseline).
 */

import { escapeHtml } from "./panel.js";
import type { ActionDoc, TraceDoc } from "./types.js";

export interface TraceNode {
  id: number;
  /** "baseline" for node 0, the action label that produced it otherwise. */
  label: string;
  r2: number | null;
  /** net compensation per group at this state, verbatim from the report. */
  groupNc: Record<string, number>;
}

export interface TraceEdge {
  from: number;
  to: number;
  label: string;
  kind: "add" | "remove";
}

export interface TraceGraph {
  nodes: TraceNode[];
  edges: TraceEdge[];
}

/** Same rendering the server uses: sign plus block id or variable list. */
export function actionLabel(action: ActionDoc): string {
  const sign = action.kind === "add" ? "+" : "-";
  return sign + (action.block_id ?? action.variables.join(","));
}

export function buildTraceGraph(trace: TraceDoc): TraceGraph {
  const accepted = trace.entries.filter((e) => e.accepted);
  const nodes: TraceNode[] = [];
  const edges: TraceEdge[] = [];

  const first = accepted[0];
  nodes.push({
    id: 0,
    label: "baseline",
    r2: first ? first.report_before.r2 : null,
    groupNc: first
      ? Object.fromEntries(
          Object.entries(first.report_before.groups).map(([g, m]) => [g, m.net_compensation]),
        )
      : {},
  });

  accepted.forEach((entry, i) => {
    const label = actionLabel(entry.action);
    nodes.push({
      id: i + 1,
      label,
      r2: entry.report_after.r2,
      groupNc: Object.fromEntries(
        Object.entries(entry.report_after.groups).map(([g, m]) => [g, m.net_compensation]),
      ),
    });
    edges.push({ from: i, to: i + 1, label, kind: entry.action.kind });
  });

  return { nodes, edges };
}

const NODE_GAP = 150;
const NODE_Y = 60;
const NODE_R = 14;

/** Inline SVG of the chain; width grows with the committed step count. */
export function renderTraceGraph(graph: TraceGraph): string {
  const width = Math.max(graph.nodes.length - 1, 0) * NODE_GAP + 120;
  const parts: string[] = [];
  for (const edge of graph.edges) {
    const x1 = 60 + edge.from * NODE_GAP + NODE_R;
    const x2 = 60 + edge.to * NODE_GAP - NODE_R;
    const mid = (x1 + x2) / 2;
    parts.push(
      `<g class="trace-edge ${edge.kind}">` +
        `<line x1="${x1}" y1="${NODE_Y}" x2="${x2}" y2="${NODE_Y}"></line>` +
        `<text x="${mid}" y="${NODE_Y - 10}" text-anchor="middle">${escapeHtml(edge.label)}</text>` +
        `</g>`,
    );
  }
  for (const node of graph.nodes) {
    const cx = 60 + node.id * NODE_GAP;
    const r2Text = node.r2 === null ? "" : `r2 ${node.r2.toPrecision(4)}`;
    parts.push(
      `<g class="trace-node" data-node="${node.id}" data-r2="${node.r2 === null ? "" : String(node.r2)}">` +
        `<circle cx="${cx}" cy="${NODE_Y}" r="${NODE_R}"></circle>` +
        `<text class="node-label" x="${cx}" y="${NODE_Y + 32}" text-anchor="middle">${escapeHtml(node.label)}</text>` +
        `<text class="node-r2" x="${cx}" y="${NODE_Y + 46}" text-anchor="middle">${r2Text}</text>` +
        `</g>`,
    );
  }
  return (
    `<svg class="trace-graph" viewBox="0 0 ${width} 120" data-nodes="${graph.nodes.length}" ` +
    `data-edges="${graph.edges.length}">${parts.join("")}</svg>`
  );
}
