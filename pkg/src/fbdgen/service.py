"""HTTP API exposing the workflow steps for the workbench and automation.

All state lives in run-record files under a state directory, so a restarted
service reconstructs everything from disk. Generation is asynchronous: the
run endpoints return immediately and clients poll the run resource.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response

from .evaluation import (
    build_report,
    eval_section,
    load_baseline_dir,
    load_candidate_dir,
    load_candidate_transcripts,
    load_waivers,
)
from .fblibrary import Library
from .llm import LlmClient
from .narrative import (
    ChunkingPlan,
    NarrativeChunk,
    NarrativeError,
    TagEntry,
    extract_chunks,
    make_plan,
    parse_narrative,
)
from .orchestrator import (
    PipelineConfig,
    PromptSet,
    load_run_record,
    run_chunk,
    resume_run,
    write_artifacts,
)


@dataclass
class ServiceConfig:
    state_dir: Path
    library: Library
    llm: LlmClient
    prompts: Optional[PromptSet] = None
    pipeline: PipelineConfig = PipelineConfig()
    dev_mode: bool = False  # enables prompt template editing


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _narrative_id(title: str, markdown: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", title.lower()).strip("-") or "narrative"
    digest = hashlib.sha256(markdown.encode("utf-8")).hexdigest()[:8]
    return f"{slug}-{digest}"


class ServiceState:
    """Disk-backed resource store; all mutation is serialized per run id."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.narratives_dir = config.state_dir / "narratives"
        self.runs_dir = config.state_dir / "runs"
        self.narratives_dir.mkdir(parents=True, exist_ok=True)
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self.executor = ThreadPoolExecutor(max_workers=config.pipeline.workers)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._in_flight: set[str] = set()

    def run_lock(self, run_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(run_id, threading.Lock())

    def mark_in_flight(self, run_id: str) -> None:
        with self._locks_guard:
            self._in_flight.add(run_id)

    def clear_in_flight(self, run_id: str) -> None:
        with self._locks_guard:
            self._in_flight.discard(run_id)

    def is_in_flight(self, run_id: str) -> bool:
        with self._locks_guard:
            return run_id in self._in_flight

    # -- narratives ---------------------------------------------------------

    def save_narrative(self, markdown: str) -> dict:
        narrative = parse_narrative(markdown)
        nid = _narrative_id(narrative.title, markdown)
        record = {
            "id": nid,
            "title": narrative.title,
            "markdown": markdown,
            "sections": [
                {
                    "id": s.id,
                    "heading": s.heading,
                    "char_count": len(s.body),
                    "tags": [t.to_json() for t in s.tag_table],
                }
                for s in narrative.sections
            ],
        }
        (self.narratives_dir / f"{nid}.json").write_text(
            json.dumps(record, indent=2) + "\n", encoding="utf-8"
        )
        return record

    def get_narrative(self, nid: str) -> Optional[dict]:
        path = self.narratives_dir / f"{nid}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def list_narratives(self) -> list[dict]:
        out = []
        for path in sorted(self.narratives_dir.glob("*.json")):
            if path.name.endswith(".chunks.json"):
                continue
            record = json.loads(path.read_text(encoding="utf-8"))
            out.append({"id": record["id"], "title": record["title"], "sections": len(record["sections"])})
        return out

    def save_plan(self, nid: str, plan: ChunkingPlan, chunks: list[NarrativeChunk]) -> dict:
        record = {
            "narrative_id": nid,
            "plan": plan.to_json(),
            "chunks": [c.to_json() for c in chunks],
        }
        (self.narratives_dir / f"{nid}.chunks.json").write_text(
            json.dumps(record, indent=2) + "\n", encoding="utf-8"
        )
        return record

    def find_chunk(self, chunk_id: str, narrative_id: Optional[str]) -> Optional[NarrativeChunk]:
        paths = (
            [self.narratives_dir / f"{narrative_id}.chunks.json"]
            if narrative_id
            else sorted(self.narratives_dir.glob("*.chunks.json"), reverse=True)
        )
        for path in paths:
            if not path.exists():
                continue
            record = json.loads(path.read_text(encoding="utf-8"))
            for chunk in record["chunks"]:
                if chunk["chunk_id"] == chunk_id:
                    return NarrativeChunk(
                        chunk_id=chunk["chunk_id"],
                        source_section_ids=chunk["source_section_ids"],
                        text=chunk["text"],
                        tags=[TagEntry(**t) for t in chunk["tags"]],
                    )
        return None

    # -- runs ----------------------------------------------------------------

    def allocate_run_dir(self, chunk_id: str) -> str:
        """Reserve a fresh run id and its directory atomically."""
        with self._locks_guard:
            seq = len([p for p in self.runs_dir.iterdir() if p.is_dir()])
            while True:
                seq += 1
                run_id = f"run-{seq:06d}-{chunk_id}"
                try:
                    (self.runs_dir / run_id).mkdir(parents=True, exist_ok=False)
                except FileExistsError:
                    continue
                return run_id

    def run_record(self, run_id: str) -> Optional[dict]:
        path = self.runs_dir / run_id / "run.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def run_meta(self, run_id: str) -> Optional[dict]:
        path = self.runs_dir / run_id / "meta.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def list_runs(self) -> list[dict]:
        out = []
        for path in sorted(self.runs_dir.iterdir()):
            if not path.is_dir():
                continue
            record = self.run_record(path.name)
            meta = self.run_meta(path.name) or {}
            out.append(
                {
                    "run_id": path.name,
                    "chunk_id": meta.get("chunk_id"),
                    "status": record["status"] if record else "pending",
                }
            )
        return out

    def artifact(self, run_id: str, name: str) -> Optional[str]:
        path = self.runs_dir / run_id / name
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")


def create_app(config: ServiceConfig) -> FastAPI:
    state = ServiceState(config)
    app = FastAPI(title="fbdgen service")
    app.state.store = state
    prompts = config.prompts or PromptSet()

    def launch(run_id: str, chunk: NarrativeChunk, decision: Optional[str] = None) -> None:
        state.mark_in_flight(run_id)

        def task() -> None:
            try:
                with state.run_lock(run_id):
                    record = state.run_record(run_id)
                    if record is not None and decision is not None:
                        run = load_run_record(record)
                        run = resume_run(run, config.library, config.llm, config.pipeline, prompts, decision=decision)
                    else:
                        run = run_chunk(chunk, config.library, config.llm, config.pipeline, prompts)
                        run.run_id = run_id
                    write_artifacts(run, state.runs_dir, config.library, config.pipeline)
            finally:
                state.clear_in_flight(run_id)

        state.executor.submit(task)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/narratives", status_code=201)
    async def post_narrative(request: Request):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            body = await request.json()
            markdown = body.get("markdown", "")
        else:
            markdown = (await request.body()).decode("utf-8")
        if not markdown.strip():
            return _error(400, "EmptyNarrative", "no markdown content supplied")
        try:
            record = state.save_narrative(markdown)
        except NarrativeError as exc:
            return _error(422, type(exc).__name__, str(exc))
        return {k: v for k, v in record.items() if k != "markdown"}

    @app.get("/narratives")
    def get_narratives():
        return state.list_narratives()

    @app.get("/narratives/{nid}")
    def get_narrative(nid: str):
        record = state.get_narrative(nid)
        if record is None:
            return _error(404, "NotFound", f"narrative '{nid}' does not exist")
        return {k: v for k, v in record.items() if k != "markdown"}

    @app.get("/narratives/{nid}/plan")
    def get_plan(nid: str):
        path = state.narratives_dir / f"{nid}.chunks.json"
        if not path.exists():
            return _error(404, "NotFound", f"narrative '{nid}' has no plan yet")
        record = json.loads(path.read_text(encoding="utf-8"))
        return {
            "narrative_id": nid,
            "plan": record["plan"],
            "chunks": [
                {"chunk_id": c["chunk_id"], "char_count": c["char_count"], "tag_count": len(c["tags"])}
                for c in record["chunks"]
            ],
        }

    @app.post("/narratives/{nid}/plan")
    async def post_plan(nid: str, request: Request):
        record = state.get_narrative(nid)
        if record is None:
            return _error(404, "NotFound", f"narrative '{nid}' does not exist")
        body = await request.json()
        try:
            narrative = parse_narrative(record["markdown"])
            plan = make_plan(narrative, body.get("strategy", "by_section"), body.get("selections"))
            chunks = extract_chunks(narrative, plan)
        except NarrativeError as exc:
            return _error(422, type(exc).__name__, str(exc))
        saved = state.save_plan(nid, plan, chunks)
        return {
            "narrative_id": nid,
            "plan": saved["plan"],
            "chunks": [
                {"chunk_id": c["chunk_id"], "char_count": c["char_count"], "tag_count": len(c["tags"])}
                for c in saved["chunks"]
            ],
        }

    @app.post("/runs", status_code=202)
    async def post_run(request: Request):
        body = await request.json()
        chunk_id = body.get("chunk_id", "")
        chunk = state.find_chunk(chunk_id, body.get("narrative_id"))
        if chunk is None:
            return _error(404, "NotFound", f"chunk '{chunk_id}' is not planned on any narrative")
        run_id = state.allocate_run_dir(chunk_id)
        (state.runs_dir / run_id / "meta.json").write_text(
            json.dumps({"run_id": run_id, "chunk_id": chunk_id}) + "\n", encoding="utf-8"
        )
        launch(run_id, chunk)
        return {"run_id": run_id, "status": "pending"}

    @app.get("/runs")
    def get_runs():
        return state.list_runs()

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        # A run being (re)generated reads as pending even if an older
        # settled record is still on disk.
        if state.is_in_flight(run_id):
            return {"run_id": run_id, "status": "pending"}
        record = state.run_record(run_id)
        if record is not None:
            return record
        if state.run_meta(run_id) is not None:
            return {"run_id": run_id, "status": "pending"}
        return _error(404, "NotFound", f"run '{run_id}' does not exist")

    @app.post("/runs/{run_id}/decision", status_code=202)
    async def post_decision(run_id: str, request: Request):
        if state.is_in_flight(run_id):
            return _error(409, "Conflict", "run is still executing")
        record = state.run_record(run_id)
        if record is None:
            if state.run_meta(run_id) is not None:
                return _error(409, "Conflict", "run is still executing")
            return _error(404, "NotFound", f"run '{run_id}' does not exist")
        if record["status"] != "awaiting_decision":
            return _error(409, "Conflict", f"run status is '{record['status']}', not awaiting_decision")
        body = await request.json()
        strategy = body.get("strategy", "")
        if not strategy:
            return _error(400, "BadRequest", "missing 'strategy'")
        chunk = _chunk_from_record(record)
        launch(run_id, chunk, decision=strategy)
        return {"run_id": run_id, "status": "resuming"}

    @app.post("/runs/{run_id}/generate", status_code=202)
    def post_generate(run_id: str):
        if state.is_in_flight(run_id):
            return _error(409, "Conflict", "run is still executing")
        record = state.run_record(run_id)
        if record is None:
            if state.run_meta(run_id) is not None:
                return _error(409, "Conflict", "run is still executing")
            return _error(404, "NotFound", f"run '{run_id}' does not exist")
        if record["status"] == "awaiting_decision":
            return _error(409, "Conflict", "strategy decision is unresolved; POST a decision first")
        chunk = _chunk_from_record(record)
        launch(run_id, chunk)
        return {"run_id": run_id, "status": "pending"}

    @app.get("/runs/{run_id}/pseudocode")
    def get_pseudocode(run_id: str):
        text = state.artifact(run_id, "diagram.fbdpc")
        if text is None:
            return _error(404, "NotFound", "no pseudo-code for this run")
        return PlainTextResponse(text)

    @app.get("/runs/{run_id}/diagram.svg")
    def get_svg(run_id: str):
        text = state.artifact(run_id, "diagram.svg")
        if text is None:
            return _error(404, "NotFound", "no diagram for this run")
        return Response(content=text, media_type="image/svg+xml")

    @app.get("/runs/{run_id}/plcopen.xml")
    def get_xml(run_id: str):
        text = state.artifact(run_id, "diagram.xml")
        if text is None:
            return _error(404, "NotFound", "no project file for this run")
        return Response(content=text, media_type="application/xml")

    @app.post("/eval")
    async def post_eval(request: Request):
        body = await request.json()
        try:
            baselines = load_baseline_dir(body["baseline_dir"])
            candidates = load_candidate_dir(body["candidate_dir"], [b.section_id for b in baselines])
            waivers = load_waivers(body["waivers"]) if body.get("waivers") else None
            transcripts = load_candidate_transcripts(body["candidate_dir"], [b.section_id for b in baselines])
            sections = [
                eval_section(b, c, config.library) for b, c in zip(baselines, candidates)
            ]
            report = build_report(sections, transcripts=transcripts, waivers=waivers)
        except (KeyError, ValueError, OSError) as exc:
            return _error(422, type(exc).__name__, str(exc))
        return report.to_json()

    if config.dev_mode:

        @app.get("/prompts")
        def list_prompts():
            return sorted(p.stem for p in prompts.directory.glob("*.txt"))

        @app.get("/prompts/{name}")
        def get_prompt(name: str):
            path = prompts.directory / f"{name}.txt"
            if not path.exists():
                return _error(404, "NotFound", f"prompt '{name}' does not exist")
            return PlainTextResponse(path.read_text(encoding="utf-8"))

        @app.put("/prompts/{name}")
        async def put_prompt(name: str, request: Request):
            path = prompts.directory / f"{name}.txt"
            path.write_text((await request.body()).decode("utf-8"), encoding="utf-8")
            return {"saved": name}

    return app


def _chunk_from_record(record: dict) -> NarrativeChunk:
    chunk = record["chunk"]
    return NarrativeChunk(
        chunk_id=chunk["chunk_id"],
        source_section_ids=chunk["source_section_ids"],
        text=chunk["text"],
        tags=[TagEntry(**t) for t in chunk["tags"]],
    )


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8040) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
