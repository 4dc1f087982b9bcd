"""Workflow engine: block-type selection, confidence-gated strategy
selection, existing-logic retrieval, the six-step FBD generation prompt
chain with a validation repair loop, and the batch pipeline that turns a
whole narrative into per-chunk artifacts.

Prompt templates are plain text files with {placeholder} substitution so a
different library can ship a different workflow without code changes.
"""

from __future__ import annotations

import json
import re
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import fblibrary
from .fblibrary import Library, StrategyPattern, context_pack
from .ir import FbdGraph, element_counts, parse_pseudocode, serialize_pseudocode, try_parse_pseudocode
from .layout import LayoutConfig, layout, render_svg
from .llm import ChatMessage, LlmClient, LlmUnavailable, TranscriptEntry
from .narrative import ChunkingPlan, NarrativeChunk, extract_chunks, parse_narrative, summarize_chunk
from .plcopen import ProjectMeta, emit_plcopen, read_plcopen
from .validate import Finding, ValidationReport, stamp_strategy_connections, validate_graph

CHAIN_STEPS = ("instantiate", "connect", "parametrize", "interlocks", "alarms", "review")


class OrchestratorError(Exception):
    pass


class UnparseableResponse(OrchestratorError):
    pass


class EmptyChunk(OrchestratorError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    auto_threshold: float = 0.8
    repair_cap: int = 2
    workers: int = 4
    summarize: bool = False
    existing_logic_dir: Optional[str] = None
    layout: LayoutConfig = LayoutConfig()
    project_meta: ProjectMeta = ProjectMeta()


@dataclass
class StrategyCandidate:
    strategy: str
    confidence: float
    rationale: str = ""

    def to_json(self) -> dict:
        return {"strategy": self.strategy, "confidence": self.confidence, "rationale": self.rationale}


@dataclass
class StrategyDecision:
    candidates: list[StrategyCandidate] = field(default_factory=list)
    selected: Optional[str] = None
    decided_by: Optional[str] = None  # auto | human

    def to_json(self) -> dict:
        return {
            "candidates": [c.to_json() for c in self.candidates],
            "selected": self.selected,
            "decided_by": self.decided_by,
        }

    @staticmethod
    def from_json(data: dict) -> "StrategyDecision":
        return StrategyDecision(
            candidates=[StrategyCandidate(**c) for c in data.get("candidates", [])],
            selected=data.get("selected"),
            decided_by=data.get("decided_by"),
        )


@dataclass
class GenerationRun:
    run_id: str
    chunk: NarrativeChunk
    status: str = "failed"  # completed | awaiting_decision | failed
    decision: StrategyDecision = field(default_factory=StrategyDecision)
    block_types: list[str] = field(default_factory=list)
    pseudo_code: str = ""
    graph: Optional[FbdGraph] = None
    validation: Optional[ValidationReport] = None
    repair_rounds: int = 0
    warnings: list[str] = field(default_factory=list)
    error: Optional[str] = None
    strategy_match: Optional[dict] = None
    transcript_entries: list[TranscriptEntry] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        counts = element_counts(self.graph) if self.graph else None
        return {
            "run_id": self.run_id,
            "status": self.status,
            "chunk": self.chunk.to_json(),
            "decision": self.decision.to_json(),
            "block_types": list(self.block_types),
            "pseudo_code": self.pseudo_code,
            "element_counts": list(counts) if counts else None,
            "validation": self.validation.to_json() if self.validation else None,
            "repair_rounds": self.repair_rounds,
            "warnings": list(self.warnings),
            "error": self.error,
            "strategy_match": self.strategy_match,
            "provenance": self.provenance,
            "transcript": [e.to_json() for e in self.transcript_entries],
        }


class PromptSet:
    """Named prompt templates with {placeholder} substitution. Only known
    placeholders are replaced, so braces in JSON examples survive."""

    def __init__(self, directory: Optional[str | Path] = None):
        self.directory = Path(directory) if directory else Path(
            str(resources.files("fbdgen").joinpath("data/prompts"))
        )

    def render(self, name: str, **values: str) -> str:
        text = (self.directory / f"{name}.txt").read_text(encoding="utf-8")
        if "{notation}" in text:
            values = {**values, "notation": (self.directory / "notation.txt").read_text(encoding="utf-8").rstrip()}
        for key, value in values.items():
            text = text.replace("{" + key + "}", value)
        return text


def _strip_code_fences(text: str) -> str:
    stripped = text.strip()
    match = re.match(r"```[a-zA-Z0-9_-]*\n(.*?)```\s*\Z", stripped, re.DOTALL)
    if match:
        return match.group(1)
    return stripped


def _extract_json(text: str):
    """First JSON value found in a response, fences and prose tolerated."""
    candidate = _strip_code_fences(text)
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass
    for opener, closer in (("[", "]"), ("{", "}")):
        start = candidate.find(opener)
        while start != -1:
            depth = 0
            for i in range(start, len(candidate)):
                if candidate[i] == opener:
                    depth += 1
                elif candidate[i] == closer:
                    depth -= 1
                    if depth == 0:
                        try:
                            return json.loads(candidate[start : i + 1])
                        except json.JSONDecodeError:
                            break
            start = candidate.find(opener, start + 1)
    raise UnparseableResponse(text[:200])


def _tags_listing(chunk: NarrativeChunk) -> str:
    return "\n".join(
        f"- {t.tag}: {t.description} ({t.signal_kind}" + (f", {t.range_units})" if t.range_units else ")")
        for t in chunk.tags
    )


def _block_summaries(library: Library) -> str:
    return "\n".join(f"- {bt.name} ({bt.category}): {bt.description}" for bt in library.block_types)


def select_block_types(
    chunk: NarrativeChunk,
    library: Library,
    llm: LlmClient,
    prompts: Optional[PromptSet] = None,
) -> tuple[list[str], list[str]]:
    """Ask the LLM for the library subset the chunk needs.

    Unknown names are dropped with a warning; an empty selection falls back
    to the whole library rather than blocking the pipeline.
    """
    if not chunk.tags:
        raise EmptyChunk(f"chunk '{chunk.chunk_id}' has no tags")
    prompts = prompts or PromptSet()
    prompt = prompts.render(
        "select_blocks",
        chunk_text=chunk.text,
        tags=_tags_listing(chunk),
        block_summaries=_block_summaries(library),
    )
    text, _, _ = llm.complete([ChatMessage("user", prompt)], step_name=f"{chunk.chunk_id}:select_blocks")
    data = _extract_json(text)
    if not isinstance(data, list):
        raise UnparseableResponse(f"expected a JSON array, got {type(data).__name__}")
    warnings: list[str] = []
    known = set(library.type_names())
    names: list[str] = []
    for item in data:
        name = str(item)
        if name in known:
            if name not in names:
                names.append(name)
        else:
            warnings.append(f"selected block type '{name}' is not in the library; dropped")
    if not names:
        warnings.append("block type selection was empty; falling back to the whole library")
        names = library.type_names()
    return names, warnings


def select_strategy(
    chunk: NarrativeChunk,
    catalog: list[StrategyPattern],
    llm: LlmClient,
    auto_threshold: float = 0.8,
    prompts: Optional[PromptSet] = None,
) -> StrategyDecision:
    """Rank candidate strategies with confidences; auto-select above the
    threshold, otherwise leave the decision to a human."""
    if not catalog:
        raise OrchestratorError("strategy catalog is empty")
    prompts = prompts or PromptSet()
    listing = "\n".join(f"- {p.name}: {p.description}" for p in catalog)
    prompt = prompts.render("select_strategy", chunk_text=chunk.text, strategies=listing)
    messages = [ChatMessage("user", prompt)]
    text, _, _ = llm.complete(messages, step_name=f"{chunk.chunk_id}:select_strategy")
    try:
        data = _extract_json(text)
    except UnparseableResponse:
        retry = messages + [
            ChatMessage("assistant", text),
            ChatMessage("user", "That was not valid JSON. Reply with the JSON object only."),
        ]
        text, _, _ = llm.complete(retry, step_name=f"{chunk.chunk_id}:select_strategy_repair")
        data = _extract_json(text)

    known = {p.name for p in catalog}
    candidates: list[StrategyCandidate] = []
    for item in data.get("candidates", []) if isinstance(data, dict) else []:
        name = str(item.get("strategy", ""))
        if name not in known:
            continue
        confidence = min(1.0, max(0.0, float(item.get("confidence", 0.0))))
        candidates.append(StrategyCandidate(name, confidence, str(item.get("rationale", ""))))
    if not candidates:
        raise UnparseableResponse("no usable strategy candidates in response")
    candidates.sort(key=lambda c: (-c.confidence, c.strategy))
    decision = StrategyDecision(candidates=candidates)
    if candidates[0].confidence >= auto_threshold:
        decision.selected = candidates[0].strategy
        decision.decided_by = "auto"
    return decision


def retrieve_existing_logic(chunk: NarrativeChunk, repository: Optional[str | Path]) -> Optional[FbdGraph]:
    """Pull matching instances (by normalized tag name) and their incident
    connections out of a repository of .fbdpc / PLCopen files."""
    from .evaluation import normalize_tag

    if repository is None:
        return None
    repo = Path(repository)
    if not repo.is_dir():
        return None
    wanted = {normalize_tag(t.tag) for t in chunk.tags}
    merged = FbdGraph(name="existing")
    found = False
    for path in sorted(repo.rglob("*")):
        if path.suffix not in (".fbdpc", ".xml") or not path.is_file():
            continue
        try:
            if path.suffix == ".fbdpc":
                graph = parse_pseudocode(path.read_text(encoding="utf-8"))
            else:
                graph = read_plcopen(path.read_text(encoding="utf-8"))
        except Exception:
            continue  # unreadable repository entries are skipped, not fatal
        matched = {b.name for b in graph.blocks if normalize_tag(b.name) in wanted}
        if not matched:
            continue
        keep = set(matched)
        for conn in graph.connections:
            if conn.source.owner in matched or conn.target.owner in matched:
                keep.add(conn.source.owner)
                keep.add(conn.target.owner)
        existing = merged.instance_names()
        for b in graph.blocks:
            if b.name in keep and b.name not in existing:
                merged.blocks.append(b)
        for f in graph.functions:
            if f.name in keep and f.name not in existing:
                merged.functions.append(f)
        for v in graph.variables:
            if v.name in keep and v.name not in existing:
                merged.variables.append(v)
        for conn in graph.connections:
            if (
                conn.source.owner in keep
                and conn.target.owner in keep
                and (conn.source.owner in matched or conn.target.owner in matched)
                and not merged.has_connection(conn.source, conn.target)
            ):
                merged.connections.append(conn)
        for param in graph.parameters:
            if param.endpoint.owner in matched:
                merged.parameters.append(param)
        found = True
    return merged if found else None


def _run_transcript(llm: LlmClient, run_id: str) -> list[TranscriptEntry]:
    prefix = f"{run_id}:"
    return [e for e in llm.transcript.entries if e.step_name.startswith(prefix)]


def generate_fbd(
    chunk: NarrativeChunk,
    context: str,
    llm: LlmClient,
    library: Library,
    pattern: Optional[StrategyPattern],
    config: PipelineConfig = PipelineConfig(),
    prompts: Optional[PromptSet] = None,
    run: Optional[GenerationRun] = None,
) -> GenerationRun:
    """Execute the six-step generation chain, then parse, validate and
    repair until clean or the repair cap is reached."""
    prompts = prompts or PromptSet()
    run = run or GenerationRun(run_id=chunk.chunk_id, chunk=chunk)
    if run.decision.selected is None:
        raise OrchestratorError(f"run '{run.run_id}': strategy decision is unresolved")

    pseudo_code = ""
    try:
        for step in CHAIN_STEPS:
            prompt = prompts.render(
                step,
                chunk_text=chunk.text,
                context_pack=context,
                pseudo_code_so_far=pseudo_code,
            )
            text, _, _ = llm.complete([ChatMessage("user", prompt)], step_name=f"{run.run_id}:{step}")
            candidate = _strip_code_fences(text)
            _, diags = try_parse_pseudocode(candidate)
            while diags:
                if run.repair_rounds >= config.repair_cap:
                    run.status = "failed"
                    run.error = f"step '{step}': " + "; ".join(str(d) for d in diags)
                    run.pseudo_code = candidate
                    return _finalize(run, llm)
                run.repair_rounds += 1
                repair_prompt = prompts.render(
                    "repair",
                    pseudo_code_so_far=candidate,
                    diagnostics="\n".join(str(d) for d in diags),
                )
                text, _, _ = llm.complete(
                    [ChatMessage("user", repair_prompt)],
                    step_name=f"{run.run_id}:{step}_repair{run.repair_rounds}",
                )
                candidate = _strip_code_fences(text)
                _, diags = try_parse_pseudocode(candidate)
            pseudo_code = candidate

        graph = parse_pseudocode(pseudo_code)
        report = validate_graph(graph, library)
        while not report.ok:
            if run.repair_rounds >= config.repair_cap:
                run.status = "failed"
                run.pseudo_code = pseudo_code
                run.validation = report
                run.error = "validation errors remain after repair: " + "; ".join(
                    f.message for f in report.errors()
                )
                return _finalize(run, llm)
            run.repair_rounds += 1
            repair_prompt = prompts.render(
                "repair",
                pseudo_code_so_far=pseudo_code,
                diagnostics=json.dumps(report.to_json(), indent=2),
            )
            text, _, _ = llm.complete(
                [ChatMessage("user", repair_prompt)],
                step_name=f"{run.run_id}:validate_repair{run.repair_rounds}",
            )
            candidate = _strip_code_fences(text)
            graph2, diags = try_parse_pseudocode(candidate)
            if diags:
                report = ValidationReport()  # re-enter loop with syntax findings
                report.findings = [Finding("error", d.code, d.message, d.line) for d in diags]
                pseudo_code = candidate
                continue
            pseudo_code, graph = candidate, graph2
            report = validate_graph(graph, library)

        run.pseudo_code = serialize_pseudocode(graph)
        run.graph = graph
        run.validation = report
        if pattern is not None:
            match = stamp_strategy_connections(graph, pattern)
            run.strategy_match = match.to_json()
        run.status = "completed"
    except LlmUnavailable as exc:
        run.status = "failed"
        run.error = f"{type(exc).__name__}: {exc}"
    return _finalize(run, llm)


def _finalize(run: GenerationRun, llm: LlmClient) -> GenerationRun:
    # Merge newly captured exchanges with whatever the run already carries
    # (resumed runs arrive with their pre-decision transcript).
    seen = {(e.step_name, e.response) for e in run.transcript_entries}
    run.transcript_entries = run.transcript_entries + [
        e for e in _run_transcript(llm, run.run_id) if (e.step_name, e.response) not in seen
    ]
    return run


def run_chunk(
    chunk: NarrativeChunk,
    library: Library,
    llm: LlmClient,
    config: PipelineConfig = PipelineConfig(),
    prompts: Optional[PromptSet] = None,
    decision_override: Optional[str] = None,
) -> GenerationRun:
    """Context generation plus FBD generation for one chunk.

    Stops with status awaiting_decision when strategy confidence is below
    the auto threshold and no override is given.
    """
    prompts = prompts or PromptSet()
    run = GenerationRun(run_id=chunk.chunk_id, chunk=chunk)
    try:
        if config.summarize:
            summary = summarize_chunk(chunk, llm)
            if summary.warning:
                run.warnings.append(summary.warning)
            if summary.summarized:
                run.provenance["original_text"] = summary.original_text
                chunk = summary.chunk
                run.chunk = chunk

        names, warnings = select_block_types(chunk, library, llm, prompts)
        run.block_types = names
        run.warnings.extend(warnings)

        run.decision = select_strategy(
            chunk, fblibrary.strategy_catalog(), llm, config.auto_threshold, prompts
        )
        if decision_override is not None:
            if not any(c.strategy == decision_override for c in run.decision.candidates):
                run.decision.candidates.append(StrategyCandidate(decision_override, 1.0, "human override"))
            run.decision.selected = decision_override
            run.decision.decided_by = "human"
        if run.decision.selected is None:
            run.status = "awaiting_decision"
            return _finalize(run, llm)

        return resume_run(run, library, llm, config, prompts)
    except LlmUnavailable as exc:
        run.status = "failed"
        run.error = f"{type(exc).__name__}: {exc}"
    except OrchestratorError as exc:
        run.status = "failed"
        run.error = f"{type(exc).__name__}: {exc}"
    return _finalize(run, llm)


def resume_run(
    run: GenerationRun,
    library: Library,
    llm: LlmClient,
    config: PipelineConfig = PipelineConfig(),
    prompts: Optional[PromptSet] = None,
    decision: Optional[str] = None,
) -> GenerationRun:
    """Continue a run whose strategy decision is now resolved."""
    prompts = prompts or PromptSet()
    if decision is not None:
        if not any(c.strategy == decision for c in run.decision.candidates):
            run.decision.candidates.append(StrategyCandidate(decision, 1.0, "human override"))
        run.decision.selected = decision
        run.decision.decided_by = "human"
    if run.decision.selected is None:
        raise OrchestratorError(f"run '{run.run_id}': no strategy decided")

    pattern = fblibrary.get_strategy(run.decision.selected)
    existing = retrieve_existing_logic(run.chunk, config.existing_logic_dir)
    if existing is not None:
        run.provenance["existing_logic"] = serialize_pseudocode(existing)
    names = run.block_types or library.type_names()
    context = context_pack(library, names, pattern, existing)
    try:
        return generate_fbd(run.chunk, context, llm, library, pattern, config, prompts, run=run)
    except LlmUnavailable as exc:
        run.status = "failed"
        run.error = f"{type(exc).__name__}: {exc}"
        return _finalize(run, llm)


def load_run_record(record: dict) -> GenerationRun:
    """Rebuild a resumable run from a persisted run record (run.json)."""
    from .llm import ChatMessage
    from .narrative import TagEntry

    chunk_data = record["chunk"]
    chunk = NarrativeChunk(
        chunk_id=chunk_data["chunk_id"],
        source_section_ids=chunk_data["source_section_ids"],
        text=chunk_data["text"],
        tags=[TagEntry(**t) for t in chunk_data["tags"]],
    )
    run = GenerationRun(run_id=record["run_id"], chunk=chunk)
    run.status = record["status"]
    run.decision = StrategyDecision.from_json(record.get("decision") or {})
    run.block_types = record.get("block_types") or []
    run.warnings = record.get("warnings") or []
    run.provenance = record.get("provenance") or {}
    run.repair_rounds = int(record.get("repair_rounds") or 0)
    run.transcript_entries = [
        TranscriptEntry(
            step_name=e.get("step_name", ""),
            request=[ChatMessage(**m) for m in e.get("request", [])],
            response=e.get("response", ""),
            input_tokens=int(e.get("input_tokens", 0)),
            output_tokens=int(e.get("output_tokens", 0)),
            wall_time=float(e.get("wall_time", 0.0)),
        )
        for e in record.get("transcript") or []
    ]
    return run


def write_artifacts(
    run: GenerationRun,
    out_dir: str | Path,
    library: Library,
    config: PipelineConfig = PipelineConfig(),
) -> None:
    """Persist the run record and, for completed runs, the pseudo-code,
    PLCopen XML and SVG next to it. Writes are atomic per file."""
    run_dir = Path(out_dir) / run.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    if run.status == "completed" and run.graph is not None:
        diagram = layout(run.graph, library, config.layout)
        _atomic_write(run_dir / "diagram.fbdpc", run.pseudo_code)
        _atomic_write(run_dir / "diagram.xml", emit_plcopen(diagram, library, config.project_meta))
        _atomic_write(run_dir / "diagram.svg", render_svg(diagram, library))
    _atomic_write(run_dir / "run.json", json.dumps(run.to_json(), indent=2, ensure_ascii=True) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def run_pipeline(
    narrative_path: str | Path,
    plan: ChunkingPlan,
    library: Library,
    llm: LlmClient,
    out_dir: str | Path,
    config: PipelineConfig = PipelineConfig(),
    prompts: Optional[PromptSet] = None,
) -> list[GenerationRun]:
    """Process every chunk of a narrative, isolating per-chunk failures.

    Artifacts land in <out_dir>/<chunk_id>/; chunks run concurrently up to
    the configured worker count, and results keep document order.
    """
    prompts = prompts or PromptSet()
    text = Path(narrative_path).read_text(encoding="utf-8")
    narrative = parse_narrative(text, source_path=str(narrative_path))
    chunks = extract_chunks(narrative, plan)

    def process(chunk: NarrativeChunk) -> GenerationRun:
        try:
            run = run_chunk(chunk, library, llm, config, prompts)
        except Exception:  # isolation: a crashing chunk must not sink the batch
            run = GenerationRun(run_id=chunk.chunk_id, chunk=chunk, status="failed")
            run.error = traceback.format_exc(limit=3)
        try:
            write_artifacts(run, out_dir, library, config)
        except Exception:
            run.status = "failed"
            run.error = (run.error or "") + "\nartifact emission failed:\n" + traceback.format_exc(limit=3)
            write_artifacts(run, out_dir, library, config)
        return run

    if config.workers <= 1:
        return [process(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(process, chunks))
