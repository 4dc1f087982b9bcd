// View renderers: pure functions from state to HTML strings. Interactive
// elements carry data-action attributes that main.ts wires up; the views
// themselves never call the API.

import { RunRecord, StrategyCandidate } from "./api.js";
import { RunSlot, WorkbenchState } from "./state.js";

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function banner(state: WorkbenchState): string {
  if (!state.banner) return "";
  return `<div class="banner error" data-testid="banner">${esc(state.banner)}
    <button data-action="retry">Retry</button></div>`;
}

function statusBadge(status: string): string {
  return `<span class="badge ${esc(status)}">${esc(status)}</span>`;
}

export function narrativeView(state: WorkbenchState): string {
  const parts: string[] = [banner(state)];
  parts.push(`
    <section class="upload">
      <h2>Control narrative</h2>
      <textarea data-testid="narrative-input" rows="8" placeholder="Paste the Markdown narrative"></textarea>
      <button data-action="upload">Load narrative</button>
    </section>`);

  if (state.narrative) {
    const rows = state.narrative.sections
      .map(
        (s) => `
        <tr data-testid="section-row">
          <td>${esc(s.id)}</td>
          <td>${esc(s.heading)}</td>
          <td class="num">${s.tags.length}</td>
          <td class="num">${s.char_count}</td>
        </tr>`,
      )
      .join("");
    parts.push(`
      <section class="sections">
        <h2>${esc(state.narrative.title)}</h2>
        <table>
          <thead><tr><th>Section</th><th>Heading</th><th>Tags</th><th>Characters</th></tr></thead>
          <tbody>${rows}</tbody>
        </table>
        <div class="plan-controls">
          <select data-testid="strategy-select">
            <option value="by_section">by_section</option>
            <option value="whole_document">whole_document</option>
            <option value="by_selection">by_selection</option>
          </select>
          <input data-testid="selection-input" placeholder="by_selection groups, e.g. s1+s2,s3"/>
          <button data-action="plan">Plan chunks</button>
        </div>
      </section>`);
  }

  if (state.plan) {
    const rows = state.plan.chunks
      .map((c) => {
        const slots = state.runs.filter((r) => r.chunkId === c.chunk_id);
        const latest = slots[slots.length - 1];
        const status = latest?.record?.status ?? (latest ? "pending" : "-");
        const open =
          latest && latest.record?.status === "completed"
            ? `<button data-action="open-diagram" data-run="${esc(latest.runId)}">Diagram</button>`
            : latest && latest.record?.status === "awaiting_decision"
              ? `<button data-action="open-decision" data-run="${esc(latest.runId)}">Decide</button>`
              : "";
        return `
        <tr data-testid="chunk-row">
          <td>${esc(c.chunk_id)}</td>
          <td class="num">${c.tag_count}</td>
          <td class="num">${c.char_count}</td>
          <td>${statusBadge(status)}</td>
          <td><button data-action="run" data-chunk="${esc(c.chunk_id)}">Generate</button> ${open}</td>
        </tr>`;
      })
      .join("");
    parts.push(`
      <section class="chunks">
        <h2>Plan: ${esc(state.plan.plan.strategy)} (${state.plan.chunks.length} chunks)</h2>
        <table>
          <thead><tr><th>Chunk</th><th>Tags</th><th>Characters</th><th>Status</th><th></th></tr></thead>
          <tbody>${rows}</tbody>
        </table>
      </section>`);
  }
  return parts.join("\n");
}

function confidenceBar(candidate: StrategyCandidate): string {
  const pct = Math.round(candidate.confidence * 100);
  return `
    <div class="candidate" data-testid="candidate">
      <div class="candidate-head">
        <strong>${esc(candidate.strategy)}</strong>
        <span class="confidence">${pct}%</span>
        <button data-action="decide" data-strategy="${esc(candidate.strategy)}">Select</button>
      </div>
      <div class="bar"><div class="fill" style="width:${pct}%"></div></div>
      <p class="rationale">${esc(candidate.rationale)}</p>
    </div>`;
}

export function decisionView(state: WorkbenchState, slot: RunSlot | null): string {
  const record = slot?.record;
  if (!slot || !record) {
    return banner(state) + `<p data-testid="empty">No run selected.</p>`;
  }
  if (record.status !== "awaiting_decision") {
    return (
      banner(state) +
      `<p data-testid="decision-closed">Run ${esc(slot.runId)} is ${esc(record.status)}; nothing to decide.</p>`
    );
  }
  const candidates = (record.decision?.candidates ?? []).map(confidenceBar).join("");
  return `
    ${banner(state)}
    <section class="decision" data-run="${esc(slot.runId)}">
      <h2>Strategy decision for ${esc(slot.chunkId)}</h2>
      <p>The generator is waiting for a human choice; confidence was below the
         automatic threshold.</p>
      ${candidates}
      <button data-action="back">Back to narrative</button>
    </section>`;
}

export function diagramView(state: WorkbenchState, slot: RunSlot | null): string {
  const record = slot?.record;
  if (!slot || !record) {
    return banner(state) + `<p data-testid="empty">No run selected.</p>`;
  }
  if (record.status !== "completed" || !state.svg) {
    return banner(state) + `<p data-testid="empty">Run ${esc(slot.runId)} has no diagram.</p>`;
  }
  const counts = record.element_counts ?? [];
  const countLine =
    counts.length === 5
      ? `${counts[0]} blocks, ${counts[1]} functions, ${counts[2]} variables, ${counts[3]} connections, ${counts[4]} parameters`
      : "";
  const warnings = (record.validation?.findings ?? [])
    .map(
      (f) =>
        `<li class="${esc(f.severity)}" data-testid="finding">[${esc(f.code)}] ${esc(f.message)}</li>`,
    )
    .join("");
  const transcript = (record.transcript ?? [])
    .map(
      (e) => `
      <details data-testid="transcript-entry">
        <summary>${esc(e.step_name)} (${e.input_tokens} in / ${e.output_tokens} out)</summary>
        <pre class="prompt">${esc(e.request[e.request.length - 1]?.content ?? "")}</pre>
        <pre class="response">${esc(e.response)}</pre>
      </details>`,
    )
    .join("");
  return `
    ${banner(state)}
    <section class="diagram" data-run="${esc(slot.runId)}">
      <h2>${esc(slot.chunkId)} ${statusBadge(record.status)}</h2>
      <p data-testid="element-counts">${countLine}</p>
      <div class="canvas" data-testid="svg-host">
        <div class="zoom-controls">
          <button data-action="zoom-in">+</button>
          <button data-action="zoom-out">-</button>
          <button data-action="zoom-reset">reset</button>
        </div>
        <div class="svg-pane">${state.svg}</div>
      </div>
      <aside class="side-panel">
        <h3>Validation</h3>
        <ul data-testid="warnings">${warnings || "<li>clean</li>"}</ul>
        <h3>Transcript</h3>
        ${transcript}
      </aside>
      <button data-action="back">Back to narrative</button>
    </section>`;
}

export function render(state: WorkbenchState, slot: RunSlot | null): string {
  switch (state.view) {
    case "decision":
      return decisionView(state, slot);
    case "diagram":
      return diagramView(state, slot);
    default:
      return narrativeView(state);
  }
}
