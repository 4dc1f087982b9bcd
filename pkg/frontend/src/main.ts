// Browser bootstrap: binds the controller to the DOM. The service base URL
// comes from the ?service= query parameter (default: same host, port 8040).

import { WorkbenchApi } from "./api.js";
import { WorkbenchController } from "./state.js";
import { render } from "./views.js";
import { IDENTITY, Transform, panBy, toCss, zoomAt, ZOOM_STEP } from "./panzoom.js";

function serviceUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("service") ?? `http://${window.location.hostname}:8040`;
}

const controller = new WorkbenchController(new WorkbenchApi(serviceUrl()));
let transform: Transform = { ...IDENTITY };
let lastAction: (() => Promise<void>) | null = null;

function root(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

function applyTransform(): void {
  const pane = root().querySelector<HTMLElement>(".svg-pane");
  if (pane) pane.style.transform = toCss(transform);
}

function paint(): void {
  root().innerHTML = render(controller.state, controller.activeRun());
  applyTransform();
}

async function track(action: () => Promise<void>): Promise<void> {
  lastAction = action;
  await action();
  paint();
}

async function pollUntilSettled(runId: string): Promise<void> {
  await controller.awaitRun(runId);
  const record = controller.state.runs.find((r) => r.runId === runId)?.record;
  if (record?.status === "awaiting_decision") {
    controller.openDecision(runId);
  } else if (record?.status === "completed") {
    await controller.openDiagram(runId);
  }
  paint();
}

function onClick(event: Event): void {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action;

  if (action === "upload") {
    const input = root().querySelector<HTMLTextAreaElement>('[data-testid="narrative-input"]');
    const markdown = input?.value ?? "";
    void track(() => controller.uploadNarrative(markdown));
  } else if (action === "plan") {
    const strategy =
      root().querySelector<HTMLSelectElement>('[data-testid="strategy-select"]')?.value ??
      "by_section";
    const raw = root().querySelector<HTMLInputElement>('[data-testid="selection-input"]')?.value;
    const selections =
      strategy === "by_selection" && raw
        ? raw.split(",").map((group) => group.split("+").map((s) => s.trim()))
        : undefined;
    void track(() => controller.makePlan(strategy, selections));
  } else if (action === "run") {
    const chunkId = target.dataset.chunk as string;
    void track(async () => {
      const runId = await controller.startRun(chunkId);
      if (runId) void pollUntilSettled(runId);
    });
  } else if (action === "open-decision") {
    controller.openDecision(target.dataset.run as string);
    void track(() => controller.refreshRun(target.dataset.run as string).then(() => undefined));
  } else if (action === "open-diagram") {
    void track(() => controller.openDiagram(target.dataset.run as string));
  } else if (action === "decide") {
    const slot = controller.activeRun();
    if (!slot) return;
    const strategy = target.dataset.strategy as string;
    target.setAttribute("disabled", "true"); // no optimistic UI: wait for ack
    void track(async () => {
      const accepted = await controller.decide(slot.runId, strategy);
      if (accepted) await pollUntilSettled(slot.runId);
    });
  } else if (action === "back") {
    controller.state.view = "narrative";
    transform = { ...IDENTITY };
    paint();
  } else if (action === "zoom-in" || action === "zoom-out") {
    const pane = root().querySelector<HTMLElement>(".svg-pane");
    const box = pane?.parentElement?.getBoundingClientRect();
    const cx = box ? box.width / 2 : 0;
    const cy = box ? box.height / 2 : 0;
    transform = zoomAt(transform, cx, cy, action === "zoom-in" ? ZOOM_STEP : 1 / ZOOM_STEP);
    applyTransform();
  } else if (action === "zoom-reset") {
    transform = { ...IDENTITY };
    applyTransform();
  } else if (action === "retry") {
    if (lastAction) void track(lastAction);
  }
}

function onWheel(event: WheelEvent): void {
  const pane = root().querySelector<HTMLElement>(".svg-pane");
  if (!pane || !pane.parentElement?.contains(event.target as Node)) return;
  event.preventDefault();
  const box = pane.parentElement.getBoundingClientRect();
  const factor = event.deltaY < 0 ? ZOOM_STEP : 1 / ZOOM_STEP;
  transform = zoomAt(transform, event.clientX - box.left, event.clientY - box.top, factor);
  applyTransform();
}

let dragging: { x: number; y: number } | null = null;

function onPointerDown(event: PointerEvent): void {
  const pane = root().querySelector<HTMLElement>(".svg-pane");
  if (!pane || !pane.parentElement?.contains(event.target as Node)) return;
  dragging = { x: event.clientX, y: event.clientY };
}

function onPointerMove(event: PointerEvent): void {
  if (!dragging) return;
  transform = panBy(transform, event.clientX - dragging.x, event.clientY - dragging.y);
  dragging = { x: event.clientX, y: event.clientY };
  applyTransform();
}

export function boot(): void {
  paint();
  root().addEventListener("click", onClick);
  root().addEventListener("wheel", onWheel, { passive: false });
  root().addEventListener("pointerdown", onPointerDown);
  window.addEventListener("pointermove", onPointerMove);
  window.addEventListener("pointerup", () => (dragging = null));
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
