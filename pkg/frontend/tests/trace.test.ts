/**
 * Trace graph construction and rendering against recorded trace payloads.
 * The structural invariant under test: node count equals committed steps
 * plus one, at every revision of the session including after an undo.
 */

import { describe, expect, it } from "vitest";

import { actionLabel, buildTraceGraph, renderTraceGraph } from "../src/trace.js";
import type { TraceResponse } from "../src/types.js";
import { loadFixtures, parseBody } from "./fakefetch.js";

const fixtures = loadFixtures();

function trace(key: string) {
  return parseBody<TraceResponse>(fixtures[key]!).trace;
}

function count(haystack: string, needle: string): number {
  return haystack.split(needle).length - 1;
}

describe("actionLabel", () => {
  it("prefers the block id with a sign prefix", () => {
    expect(actionLabel({ kind: "add", variables: ["hcc:H_MHA_X"], block_id: "mh_pair" })).toBe(
      "+mh_pair",
    );
    expect(actionLabel({ kind: "remove", variables: ["hcc:H_KIDNEY"], block_id: "kidney_block" })).toBe(
      "-kidney_block",
    );
  });

  it("falls back to the variable list when there is no block id", () => {
    expect(actionLabel({ kind: "add", variables: ["hcc:H_MHA_X", "hcc:H_MHB_X"], block_id: null })).toBe(
      "+hcc:H_MHA_X,hcc:H_MHB_X",
    );
  });
});

describe("buildTraceGraph", () => {
  it("keeps node count at committed steps plus one across the session", () => {
    const expected: Record<string, number> = {
      trace_r0: 0,
      trace_r1: 1,
      trace_r2: 2,
      trace_r3: 3,
      trace_r4: 2, // one step undone
    };
    for (const [key, steps] of Object.entries(expected)) {
      const graph = buildTraceGraph(trace(key));
      expect(graph.nodes.length, key).toBe(steps + 1);
      expect(graph.edges.length, key).toBe(steps);
    }
  });

  it("renders an empty trace as a lone baseline node", () => {
    const graph = buildTraceGraph(trace("trace_r0"));
    expect(graph.nodes).toEqual([{ id: 0, label: "baseline", r2: null, groupNc: {} }]);
    expect(graph.edges).toEqual([]);
  });

  it("labels the three-step chain baseline, +mh_pair, +sud_pair, -kidney_block", () => {
    const graph = buildTraceGraph(trace("trace_r3"));
    expect(graph.nodes.map((n) => n.label)).toEqual([
      "baseline",
      "+mh_pair",
      "+sud_pair",
      "-kidney_block",
    ]);
    expect(graph.edges.map((e) => e.kind)).toEqual(["add", "add", "remove"]);
    expect(graph.edges.map((e) => [e.from, e.to])).toEqual([
      [0, 1],
      [1, 2],
      [2, 3],
    ]);
  });

  it("copies node metrics verbatim from the recorded reports", () => {
    const doc = trace("trace_r3");
    const graph = buildTraceGraph(doc);
    const accepted = doc.entries.filter((e) => e.accepted);

    const baseline = graph.nodes[0]!;
    expect(baseline.r2).toBe(accepted[0]!.report_before.r2);
    expect(baseline.r2).toBe(0.12318340700224106);
    expect(baseline.groupNc["mhsud_like"]).toBe(-2443.0490143096977);
    expect(baseline.groupNc["kidney_like"]).toBe(0);
    expect(baseline.groupNc["liver_like"]).toBe(0);

    accepted.forEach((entry, i) => {
      const node = graph.nodes[i + 1]!;
      expect(node.r2).toBe(entry.report_after.r2);
      for (const [g, metrics] of Object.entries(entry.report_after.groups)) {
        expect(node.groupNc[g]).toBe(metrics.net_compensation);
      }
    });
    expect(graph.nodes[3]!.r2).toBe(0.12865090466406948);
    expect(graph.nodes[3]!.groupNc["mhsud_like"]).toBe(-656.2606286543178);
  });

  it("matches the pre-undo prefix after an undo", () => {
    const before = buildTraceGraph(trace("trace_r2"));
    const after = buildTraceGraph(trace("trace_r4"));
    expect(after).toEqual(before);
  });
});

describe("renderTraceGraph", () => {
  it("exposes node and edge counts on the svg element", () => {
    const graph = buildTraceGraph(trace("trace_r3"));
    const svg = renderTraceGraph(graph);
    expect(svg).toContain('data-nodes="4"');
    expect(svg).toContain('data-edges="3"');
    expect(count(svg, 'class="trace-node"')).toBe(4);
    expect(count(svg, 'class="trace-edge')).toBe(3);
  });

  it("carries the full-precision r2 in a data attribute per node", () => {
    const graph = buildTraceGraph(trace("trace_r1"));
    const svg = renderTraceGraph(graph);
    expect(svg).toContain('data-node="0" data-r2="0.12318340700224106"');
    expect(svg).toContain('data-node="1" data-r2="0.13822150355015417"');
    expect(svg).toContain(">+mh_pair</text>");
  });

  it("renders the empty trace without edges", () => {
    const svg = renderTraceGraph(buildTraceGraph(trace("trace_r0")));
    expect(svg).toContain('data-nodes="1"');
    expect(svg).toContain('data-edges="0"');
    expect(svg).toContain(">baseline</text>");
    expect(svg).not.toContain("trace-edge");
    expect(svg).toContain('data-node="0" data-r2=""');
  });
});
