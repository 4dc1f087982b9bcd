"""Command-line front end for batch runs over whole narratives and corpora.

Every subcommand is a thin shell over one or two module operations. Exit
status: 0 on full success, 1 on partial batch failure or unwaived
evaluation errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fblibrary
from .evaluation import (
    build_report,
    eval_section,
    load_baseline_dir,
    load_candidate_dir,
    load_candidate_transcripts,
    load_waivers,
)
from .ir import element_counts, parse_pseudocode
from .layout import LayoutConfig, layout, render_svg
from .llm import make_client
from .narrative import extract_chunks, make_plan, parse_narrative
from .orchestrator import PipelineConfig, PromptSet, run_pipeline
from .plcopen import ProjectMeta, emit_plcopen
from .service import ServiceConfig, serve


def _load_library(path: str | None):
    if path:
        return fblibrary.load_library(path)
    return fblibrary.load_bundled_library()


def _parse_selections(raw: str | None):
    # "s1+s2,s3" -> [["s1","s2"],["s3"]]
    if not raw:
        return None
    return [group.split("+") for group in raw.split(",")]


def cmd_plan(args) -> int:
    narrative = parse_narrative(Path(args.narrative).read_text(encoding="utf-8"), args.narrative)
    plan = make_plan(narrative, args.strategy, _parse_selections(args.selections))
    print(json.dumps(plan.to_json(), indent=2))
    return 0


def cmd_extract(args) -> int:
    narrative = parse_narrative(Path(args.narrative).read_text(encoding="utf-8"), args.narrative)
    plan = make_plan(narrative, args.strategy, _parse_selections(args.selections))
    chunks = extract_chunks(narrative, plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for chunk in chunks:
        (out / f"{chunk.chunk_id}.json").write_text(
            json.dumps(chunk.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        print(f"{chunk.chunk_id}: {chunk.char_count} chars, {len(chunk.tags)} tags")
    return 0


def cmd_generate(args) -> int:
    library = _load_library(args.library)
    narrative = parse_narrative(Path(args.narrative).read_text(encoding="utf-8"), args.narrative)
    plan = make_plan(narrative, args.strategy, _parse_selections(args.selections))
    config = PipelineConfig(
        auto_threshold=args.auto_threshold,
        repair_cap=args.repair_cap,
        workers=args.workers,
        summarize=args.summarize,
        existing_logic_dir=args.existing,
    )
    prompts = PromptSet(args.prompts) if args.prompts else PromptSet()
    client = make_client(args.llm)
    runs = run_pipeline(args.narrative, plan, library, client, args.out, config, prompts)
    failed = 0
    for run in runs:
        line = f"{run.run_id}: {run.status}"
        if run.graph is not None:
            line += f" {element_counts(run.graph)}"
        if run.error:
            line += f" ({run.error.splitlines()[0][:120]})"
        print(line)
        if run.status != "completed":
            failed += 1
    print(f"{len(runs) - failed}/{len(runs)} chunks completed")
    return 0 if failed == 0 and runs else 1


def _read_graph(path: str):
    return parse_pseudocode(Path(path).read_text(encoding="utf-8"))


def cmd_layout(args) -> int:
    library = _load_library(args.library)
    diagram = layout(_read_graph(args.input), library, LayoutConfig())
    data = {
        "canvas": list(diagram.canvas),
        "nodes": [
            {"instance": n.instance, "x": n.x, "y": n.y, "width": n.width, "height": n.height}
            for n in diagram.nodes
        ],
        "edges": [
            {
                "source": str(e.connection.source),
                "target": str(e.connection.target),
                "backward": e.is_backward,
                "polyline": [list(p) for p in e.polyline],
            }
            for e in diagram.edges
        ],
    }
    _write_or_print(args.out, json.dumps(data, indent=2) + "\n")
    return 0


def cmd_emit(args) -> int:
    library = _load_library(args.library)
    diagram = layout(_read_graph(args.input), library, LayoutConfig())
    _write_or_print(args.out, emit_plcopen(diagram, library, ProjectMeta()))
    return 0


def cmd_render(args) -> int:
    library = _load_library(args.library)
    diagram = layout(_read_graph(args.input), library, LayoutConfig())
    _write_or_print(args.out, render_svg(diagram, library))
    return 0


def cmd_eval(args) -> int:
    library = _load_library(args.library)
    baselines = load_baseline_dir(args.baseline)
    candidates = load_candidate_dir(args.candidate, [b.section_id for b in baselines])
    waivers = load_waivers(args.waivers) if args.waivers else None
    transcripts = load_candidate_transcripts(args.candidate, [b.section_id for b in baselines])
    sections = [eval_section(b, c, library) for b, c in zip(baselines, candidates)]
    report = build_report(sections, transcripts=transcripts, waivers=waivers)
    if args.report:
        base = Path(args.report)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".json").write_text(
            json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        base.with_suffix(".md").write_text(report.to_markdown(), encoding="utf-8")
    print(report.to_markdown())
    leftovers = report.unwaived_discrepancies()
    for section_id, disc in leftovers:
        print(f"DISCREPANCY {section_id}: [{disc.kind}] {disc.detail}")
    return 1 if leftovers else 0


def cmd_serve(args) -> int:
    config = ServiceConfig(
        state_dir=Path(args.state_dir),
        library=_load_library(args.library),
        llm=make_client(args.llm),
        prompts=PromptSet(args.prompts) if args.prompts else None,
        pipeline=PipelineConfig(auto_threshold=args.auto_threshold, workers=args.workers),
        dev_mode=args.dev,
    )
    serve(config, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbdgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_narrative(p):
        p.add_argument("--narrative", required=True, help="markdown control narrative")
        p.add_argument("--strategy", default="by_section", choices=["whole_document", "by_section", "by_selection"])
        p.add_argument("--selections", help="section groups, e.g. 's1+s2,s3'")

    p = sub.add_parser("plan", help="print the chunking plan")
    add_common_narrative(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("extract", help="write narrative chunks as JSON")
    add_common_narrative(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="run the full pipeline over a narrative")
    add_common_narrative(p)
    p.add_argument("--library", help="library definition JSON (default: bundled BASIC_LIB)")
    p.add_argument("--prompts", help="prompt template directory")
    p.add_argument("--llm", default="live", help="'live' or 'replay:<dir>'")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--auto-threshold", type=float, default=0.8)
    p.add_argument("--repair-cap", type=int, default=2)
    p.add_argument("--summarize", action="store_true")
    p.add_argument("--existing", help="repository of existing control logic")
    p.set_defaults(func=cmd_generate)

    for name, func, help_text in (
        ("layout", cmd_layout, "layout a pseudo-code diagram, print JSON"),
        ("emit", cmd_emit, "emit PLCopen XML for a pseudo-code diagram"),
        ("render", cmd_render, "render SVG for a pseudo-code diagram"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--in", dest="input", required=True, help=".fbdpc file")
        p.add_argument("--library")
        p.add_argument("--out", help="output file (default: stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score candidate diagrams against baselines")
    p.add_argument("--baseline", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--waivers")
    p.add_argument("--library")
    p.add_argument("--report", help="basename for .json/.md report files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--library")
    p.add_argument("--prompts")
    p.add_argument("--llm", default="live")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--auto-threshold", type=float, default=0.8)
    p.add_argument("--dev", action="store_true", help="allow prompt editing over HTTP")
    p.set_defaults(func=cmd_serve)

    return parser


def _write_or_print(out: str | None, text: str) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a failure, not a traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
