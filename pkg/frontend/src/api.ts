// Typed client for the fbdgen HTTP API. The workbench talks to the service
// exclusively through this module; it holds no workflow logic of its own.

export interface TagEntry {
  tag: string;
  description: string;
  signal_kind: string;
  range_units: string | null;
}

export interface SectionSummary {
  id: string;
  heading: string;
  char_count: number;
  tags: TagEntry[];
}

export interface NarrativeRecord {
  id: string;
  title: string;
  sections: SectionSummary[];
}

export interface ChunkSummary {
  chunk_id: string;
  char_count: number;
  tag_count: number;
}

export interface PlanRecord {
  narrative_id: string;
  plan: { strategy: string; selections: string[][] | null };
  chunks: ChunkSummary[];
}

export interface StrategyCandidate {
  strategy: string;
  confidence: number;
  rationale: string;
}

export interface TranscriptEntry {
  step_name: string;
  response: string;
  input_tokens: number;
  output_tokens: number;
  request: { role: string; content: string }[];
}

export interface ValidationFinding {
  severity: string;
  code: string;
  message: string;
  line?: number;
}

export interface RunRecord {
  run_id: string;
  status: "pending" | "awaiting_decision" | "completed" | "failed";
  chunk?: { chunk_id: string; text: string; tags: TagEntry[] };
  decision?: {
    candidates: StrategyCandidate[];
    selected: string | null;
    decided_by: string | null;
  };
  element_counts?: number[] | null;
  validation?: { findings: ValidationFinding[] } | null;
  pseudo_code?: string;
  repair_rounds?: number;
  warnings?: string[];
  error?: string | null;
  transcript?: TranscriptEntry[];
}

export interface RunListEntry {
  run_id: string;
  chunk_id: string | null;
  status: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class WorkbenchApi {
  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = `HTTP_${response.status}`;
      let message = response.statusText;
      try {
        const data = (await response.json()) as { code?: string; message?: string };
        code = data.code ?? code;
        message = data.message ?? message;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  private async requestText(path: string): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, { method: "GET" });
    if (!response.ok) {
      throw new ApiError(response.status, `HTTP_${response.status}`, response.statusText);
    }
    return await response.text();
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }

  uploadNarrative(markdown: string): Promise<NarrativeRecord> {
    return this.request("POST", "/narratives", { markdown });
  }

  getNarrative(id: string): Promise<NarrativeRecord> {
    return this.request("GET", `/narratives/${id}`);
  }

  listNarratives(): Promise<{ id: string; title: string; sections: number }[]> {
    return this.request("GET", "/narratives");
  }

  makePlan(narrativeId: string, strategy: string, selections?: string[][]): Promise<PlanRecord> {
    return this.request("POST", `/narratives/${narrativeId}/plan`, { strategy, selections });
  }

  getPlan(narrativeId: string): Promise<PlanRecord> {
    return this.request("GET", `/narratives/${narrativeId}/plan`);
  }

  startRun(narrativeId: string, chunkId: string): Promise<{ run_id: string }> {
    return this.request("POST", "/runs", { narrative_id: narrativeId, chunk_id: chunkId });
  }

  getRun(runId: string): Promise<RunRecord> {
    return this.request("GET", `/runs/${runId}`);
  }

  listRuns(): Promise<RunListEntry[]> {
    return this.request("GET", "/runs");
  }

  decide(runId: string, strategy: string): Promise<{ run_id: string }> {
    return this.request("POST", `/runs/${runId}/decision`, { strategy });
  }

  diagramSvg(runId: string): Promise<string> {
    return this.requestText(`/runs/${runId}/diagram.svg`);
  }

  pseudocode(runId: string): Promise<string> {
    return this.requestText(`/runs/${runId}/pseudocode`);
  }

  /** Poll a run until it leaves transient states or the timeout elapses. */
  async awaitRun(runId: string, timeoutMs = 30000, intervalMs = 150): Promise<RunRecord> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const record = await this.getRun(runId);
      if (record.status !== "pending") return record;
      if (Date.now() > deadline) throw new ApiError(408, "Timeout", `run ${runId} still pending`);
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
