import { describe, expect, it } from "vitest";

import { ApiError, WorkbenchApi } from "../src/api.js";

function fakeFetch(routes: Record<string, { status?: number; json?: unknown; text?: string }>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const impl = (async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const key = `${init?.method ?? "GET"} ${url}`;
    const route = routes[key];
    if (!route) throw new Error(`no route for ${key}`);
    const status = route.status ?? 200;
    return {
      ok: status < 400,
      status,
      statusText: String(status),
      json: async () => route.json,
      text: async () => route.text ?? JSON.stringify(route.json),
    } as Response;
  }) as typeof fetch;
  return { impl, calls };
}

describe("WorkbenchApi", () => {
  it("posts narratives as JSON", async () => {
    const { impl, calls } = fakeFetch({
      "POST http://s/narratives": { json: { id: "n1", title: "T", sections: [] } },
    });
    const api = new WorkbenchApi("http://s", impl);
    const record = await api.uploadNarrative("# T\n## S\nbody");
    expect(record.id).toBe("n1");
    expect(calls[0].init?.headers).toEqual({ "content-type": "application/json" });
    expect(JSON.parse(calls[0].init?.body as string).markdown).toContain("# T");
  });

  it("surfaces service errors verbatim", async () => {
    const { impl } = fakeFetch({
      "POST http://s/runs": { status: 404, json: { code: "NotFound", message: "chunk 'x' is not planned" } },
    });
    const api = new WorkbenchApi("http://s", impl);
    try {
      await api.startRun("n1", "x");
      expect.unreachable();
    } catch (error) {
      const apiError = error as ApiError;
      expect(apiError.status).toBe(404);
      expect(apiError.code).toBe("NotFound");
      expect(apiError.message).toBe("chunk 'x' is not planned");
    }
  });

  it("fetches diagram svg as text", async () => {
    const { impl } = fakeFetch({
      "GET http://s/runs/r1/diagram.svg": { text: "<svg/>" },
    });
    const api = new WorkbenchApi("http://s", impl);
    expect(await api.diagramSvg("r1")).toBe("<svg/>");
  });

  it("awaitRun polls until the run settles", async () => {
    let polls = 0;
    const impl = (async () => {
      polls += 1;
      return {
        ok: true,
        status: 200,
        statusText: "200",
        json: async () => ({ run_id: "r1", status: polls < 3 ? "pending" : "completed" }),
        text: async () => "",
      } as Response;
    }) as typeof fetch;
    const api = new WorkbenchApi("http://s", impl);
    const record = await api.awaitRun("r1", 5000, 1);
    expect(record.status).toBe("completed");
    expect(polls).toBe(3);
  });
});
