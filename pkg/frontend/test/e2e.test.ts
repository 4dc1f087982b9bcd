// End-to-end workflow against the real service in replay mode: upload,
// plan, generate, resolve the human decision gate, inspect the diagram,
// and verify a page reload reconstructs identical state.

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { WorkbenchApi } from "../src/api.js";
import { WorkbenchController, stateFingerprint } from "../src/state.js";

const REPO = resolve(__dirname, "..", "..");
const ARCHIVE = join(REPO, "fixtures", "replay", "ammonium");
const NARRATIVE = join(REPO, "fixtures", "narratives", "ammonium_nitrate.md");
const PORT = 8900 + Math.floor(Math.random() * 90);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

async function waitForHealth(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(async () => {
  const stateDir = mkdtempSync(join(tmpdir(), "workbench-e2e-"));
  service = spawn(
    "python3",
    [
      "-m",
      "fbdgen.cli",
      "serve",
      "--state-dir",
      stateDir,
      "--llm",
      `replay:${ARCHIVE}`,
      "--auto-threshold",
      "0.99",
      "--port",
      String(PORT),
    ],
    { cwd: REPO, stdio: ["ignore", "pipe", "pipe"] },
  );
  service.stderr?.on("data", (chunk) => {
    const text = String(chunk);
    if (text.includes("Traceback")) console.error(text);
  });
  await waitForHealth();
}, 30000);

afterAll(() => {
  service?.kill("SIGTERM");
});

describe("workbench end-to-end", () => {
  const api = new WorkbenchApi(BASE);
  const controller = new WorkbenchController(api);
  let runId: string;
  let narrativeId: string;

  it("uploads the narrative and sees the running-example section", async () => {
    await controller.uploadNarrative(readFileSync(NARRATIVE, "utf-8"));
    expect(controller.state.banner).toBeNull();
    const narrative = controller.state.narrative!;
    narrativeId = narrative.id;
    expect(narrative.sections).toHaveLength(10);
    const section2 = narrative.sections[1];
    expect(section2.id).toBe("section-2-neutralization-reactor");
    expect(section2.tags).toHaveLength(10);
    expect(section2.char_count).toBe(3826);
  });

  it("plans by section", async () => {
    await controller.makePlan("by_section");
    expect(controller.state.plan!.chunks).toHaveLength(10);
    expect(controller.state.plan!.chunks[1].chunk_id).toBe("section-2-neutralization-reactor");
  });

  it("runs the chunk into the decision gate", async () => {
    const id = await controller.startRun("section-2-neutralization-reactor");
    expect(id).toBeTruthy();
    runId = id!;
    const record = await controller.awaitRun(runId);
    expect(record!.status).toBe("awaiting_decision");
    const candidates = record!.decision!.candidates;
    expect(candidates[0].strategy).toBe("ratio");
    expect(candidates[0].confidence).toBeGreaterThan(0.9);
    expect(candidates.length).toBeGreaterThan(1);
  });

  it("a human decision resumes the run to completion", async () => {
    const accepted = await controller.decide(runId, "ratio");
    expect(accepted).toBe(true);
    const record = await controller.awaitRun(runId);
    expect(record!.status).toBe("completed");
    expect(record!.decision!.decided_by).toBe("human");
    expect(record!.element_counts).toEqual([11, 3, 11, 32, 24]);
  });

  it("serves the rendered diagram", async () => {
    await controller.openDiagram(runId);
    expect(controller.state.view).toBe("diagram");
    expect(controller.state.svg).toContain("<svg");
    expect(controller.state.svg).toContain("FFIC-102");
    const pseudocode = await api.pseudocode(runId);
    expect(pseudocode.startsWith("DIAGRAM section-2-neutralization-reactor")).toBe(true);
  });

  it("rejects a second decision with a conflict", async () => {
    const accepted = await controller.decide(runId, "cascade");
    expect(accepted).toBe(false);
    expect(controller.state.banner).toContain("not awaiting_decision");
  });

  it("page reload reconstructs identical state from the service", async () => {
    const reloaded = new WorkbenchController(new WorkbenchApi(BASE));
    await reloaded.loadFromService(narrativeId);
    expect(reloaded.state.banner).toBeNull();

    // refresh the original controller's run records so both reflect the
    // final server state, then compare the full fingerprints
    await controller.refreshRun(runId);
    expect(stateFingerprint(reloaded.state)).toBe(stateFingerprint(controller.state));
  });
}, 60000);
