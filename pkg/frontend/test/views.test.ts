import { describe, expect, it } from "vitest";

import { RunRecord } from "../src/api.js";
import { initialState } from "../src/state.js";
import { decisionView, diagramView, narrativeView, render } from "../src/views.js";

function stateWithNarrative() {
  const state = initialState();
  state.narrative = {
    id: "n1",
    title: "Plant",
    sections: [
      {
        id: "section-2-neutralization-reactor",
        heading: "Section 2: Neutralization Reactor",
        char_count: 3826,
        tags: Array.from({ length: 10 }, (_, i) => ({
          tag: `T-${i}`,
          description: "",
          signal_kind: "other",
          range_units: null,
        })),
      },
    ],
  };
  return state;
}

describe("narrativeView", () => {
  it("renders sections with tag and character counts", () => {
    const html = narrativeView(stateWithNarrative());
    expect(html).toContain("section-2-neutralization-reactor");
    expect(html).toContain(">10<");
    expect(html).toContain(">3826<");
  });

  it("shows the plan preview with chunk rows", () => {
    const state = stateWithNarrative();
    state.plan = {
      narrative_id: "n1",
      plan: { strategy: "by_selection", selections: [["a", "b"]] },
      chunks: [{ chunk_id: "a+b", char_count: 120, tag_count: 3 }],
    };
    const html = narrativeView(state);
    expect(html).toContain("by_selection");
    expect(html).toContain("a+b");
    expect(html).toContain('data-action="run"');
  });

  it("renders the error banner with a retry control", () => {
    const state = initialState();
    state.banner = "fetch failed";
    const html = narrativeView(state);
    expect(html).toContain("fetch failed");
    expect(html).toContain('data-action="retry"');
  });

  it("escapes markup in service data", () => {
    const state = stateWithNarrative();
    state.narrative!.title = "<script>alert(1)</script>";
    expect(narrativeView(state)).not.toContain("<script>alert");
  });
});

describe("decisionView", () => {
  const record: RunRecord = {
    run_id: "r1",
    status: "awaiting_decision",
    decision: {
      candidates: [
        { strategy: "ratio", confidence: 0.55, rationale: "two coupled flows" },
        { strategy: "cascade", confidence: 0.45, rationale: "nested loops" },
      ],
      selected: null,
      decided_by: null,
    },
  };

  it("renders both candidates with confidences and select buttons", () => {
    const state = initialState();
    const html = decisionView(state, { runId: "r1", chunkId: "c1", record });
    expect(html.match(/data-testid="candidate"/g)?.length).toBe(2);
    expect(html).toContain("55%");
    expect(html).toContain("45%");
    expect(html).toContain('data-action="decide" data-strategy="ratio"');
    expect(html).toContain("two coupled flows");
  });

  it("reports already-decided runs instead of offering buttons", () => {
    const state = initialState();
    const done: RunRecord = { ...record, status: "completed" };
    const html = decisionView(state, { runId: "r1", chunkId: "c1", record: done });
    expect(html).toContain("nothing to decide");
    expect(html).not.toContain('data-action="decide"');
  });
});

describe("diagramView", () => {
  it("renders svg, counts, warnings and transcript", () => {
    const state = initialState();
    state.svg = "<svg><rect/></svg>";
    const record: RunRecord = {
      run_id: "r1",
      status: "completed",
      element_counts: [11, 3, 11, 32, 24],
      validation: {
        findings: [{ severity: "warning", code: "DANGLING_OUTPUT", message: "X dangles" }],
      },
      transcript: [
        {
          step_name: "c1:connect",
          response: "DIAGRAM d",
          input_tokens: 120,
          output_tokens: 40,
          request: [{ role: "user", content: "wire it up" }],
        },
      ],
    };
    const html = diagramView(state, { runId: "r1", chunkId: "c1", record });
    expect(html).toContain("<svg><rect/></svg>");
    expect(html).toContain("11 blocks, 3 functions, 11 variables, 32 connections, 24 parameters");
    expect(html).toContain("DANGLING_OUTPUT");
    expect(html).toContain("120 in / 40 out");
    expect(html).toContain('data-action="zoom-in"');
  });

  it("shows an empty-state message without a diagram", () => {
    const state = initialState();
    const html = diagramView(state, null);
    expect(html).toContain("No run selected");
  });
});

describe("render dispatch", () => {
  it("routes by view name", () => {
    const state = stateWithNarrative();
    state.view = "narrative";
    expect(render(state, null)).toContain("Control narrative");
    state.view = "decision";
    expect(render(state, null)).toContain("No run selected");
  });
});
