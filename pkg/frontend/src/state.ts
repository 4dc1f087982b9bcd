// Workbench state: a thin mirror of service resources. Every mutation is an
// API call followed by a re-read, so reloading the page (loadFromService)
// reconstructs exactly what the service knows.

import {
  NarrativeRecord,
  PlanRecord,
  RunRecord,
  WorkbenchApi,
} from "./api.js";

export type ViewName = "narrative" | "decision" | "diagram";

export interface RunSlot {
  runId: string;
  chunkId: string;
  record: RunRecord | null;
}

export interface WorkbenchState {
  view: ViewName;
  narrative: NarrativeRecord | null;
  plan: PlanRecord | null;
  runs: RunSlot[];
  activeRunId: string | null;
  svg: string | null;
  banner: string | null; // surfaced service errors, verbatim
}

export function initialState(): WorkbenchState {
  return {
    view: "narrative",
    narrative: null,
    plan: null,
    runs: [],
    activeRunId: null,
    svg: null,
    banner: null,
  };
}

/** Serializable projection used to compare pre/post-reload states. */
export function stateFingerprint(state: WorkbenchState): string {
  return JSON.stringify({
    narrative: state.narrative,
    plan: state.plan,
    runs: state.runs.map((slot) => ({
      runId: slot.runId,
      chunkId: slot.chunkId,
      record: slot.record,
    })),
  });
}

export class WorkbenchController {
  state: WorkbenchState = initialState();

  constructor(public api: WorkbenchApi) {}

  private fail(error: unknown): void {
    this.state.banner = error instanceof Error ? error.message : String(error);
  }

  async uploadNarrative(markdown: string): Promise<void> {
    try {
      this.state.narrative = await this.api.uploadNarrative(markdown);
      this.state.plan = null;
      this.state.runs = [];
      this.state.banner = null;
    } catch (error) {
      this.fail(error);
    }
  }

  async makePlan(strategy: string, selections?: string[][]): Promise<void> {
    if (!this.state.narrative) return;
    try {
      this.state.plan = await this.api.makePlan(this.state.narrative.id, strategy, selections);
      this.state.banner = null;
    } catch (error) {
      this.fail(error);
    }
  }

  async startRun(chunkId: string): Promise<string | null> {
    if (!this.state.narrative) return null;
    try {
      const { run_id } = await this.api.startRun(this.state.narrative.id, chunkId);
      this.state.runs.push({ runId: run_id, chunkId, record: null });
      this.state.banner = null;
      return run_id;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  async refreshRun(runId: string): Promise<RunRecord | null> {
    try {
      const record = await this.api.getRun(runId);
      const slot = this.state.runs.find((r) => r.runId === runId);
      if (slot) slot.record = record;
      if (record.status === "awaiting_decision" && this.state.activeRunId === runId) {
        this.state.view = "decision";
      }
      return record;
    } catch (error) {
      this.fail(error);
      return null;
    }
  }

  /** Poll until the run settles; keeps the state in sync along the way. */
  async awaitRun(runId: string, timeoutMs = 30000): Promise<RunRecord | null> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const record = await this.refreshRun(runId);
      if (record && record.status !== "pending") return record;
      if (Date.now() > deadline) {
        this.state.banner = `run ${runId} did not settle in time`;
        return record;
      }
      await new Promise((resolve) => setTimeout(resolve, 120));
    }
  }

  /** Decisions must await the server acknowledgement; no optimistic UI. */
  async decide(runId: string, strategy: string): Promise<boolean> {
    try {
      await this.api.decide(runId, strategy);
      this.state.banner = null;
      await this.refreshRun(runId);
      return true;
    } catch (error) {
      this.fail(error);
      await this.refreshRun(runId);
      return false;
    }
  }

  async openDiagram(runId: string): Promise<void> {
    try {
      this.state.svg = await this.api.diagramSvg(runId);
      this.state.activeRunId = runId;
      this.state.view = "diagram";
      this.state.banner = null;
    } catch (error) {
      this.fail(error);
    }
  }

  openDecision(runId: string): void {
    this.state.activeRunId = runId;
    this.state.view = "decision";
  }

  activeRun(): RunSlot | null {
    return this.state.runs.find((r) => r.runId === this.state.activeRunId) ?? null;
  }

  /**
   * Rebuild the whole state from the service, as a fresh page load does.
   * Narrative and plan come back from their resources; runs are re-listed
   * and re-read one by one.
   */
  async loadFromService(narrativeId: string): Promise<void> {
    this.state = initialState();
    try {
      this.state.narrative = await this.api.getNarrative(narrativeId);
    } catch (error) {
      this.fail(error);
      return;
    }
    try {
      this.state.plan = await this.api.getPlan(narrativeId);
    } catch {
      this.state.plan = null; // no plan saved yet
    }
    try {
      const runs = await this.api.listRuns();
      for (const entry of runs) {
        const record = await this.api.getRun(entry.run_id);
        this.state.runs.push({
          runId: entry.run_id,
          chunkId: entry.chunk_id ?? record.chunk?.chunk_id ?? "",
          record,
        });
      }
    } catch (error) {
      this.fail(error);
    }
  }
}
