"""Quality measurement against expert-reviewed baseline diagrams: strategy
identification, strategy-relevant block and connection recall, alarm
parameter fidelity, review-time estimation, cost roll-up and reporting.

Baselines live as pseudo-code files plus a sidecar label
(`<section>.label.json` with {"strategy": ..., "alarm_pins": [...]}). Name
comparisons are normalization-based so differently spelled but equivalent
tags still match; adjudicated mismatches can be waived with a justification.
"""

from __future__ import annotations

import json
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .fblibrary import Library, get_strategy
from .ir import FbdGraph, element_counts, parse_pseudocode
from .llm import LlmTranscript, cost_estimate
from .validate import stamp_strategy_connections

DEFAULT_WEIGHTS = {"block": 2.0, "function": 1.0, "variable": 0.5, "connection": 1.0, "parameter": 0.5}
DEFAULT_REWORK_MINUTES = 5.0
DEFAULT_FACTORS = (2.0, 3.0)
DEFAULT_PRICES = (1.25, 10.0)  # USD per million input / output tokens


def normalize_tag(name: str) -> str:
    """Uppercase and strip everything non-alphanumeric: LT-104 == lt_104."""
    return re.sub(r"[^A-Za-z0-9]", "", name).upper()


@dataclass
class Discrepancy:
    kind: str  # wrong_strategy | missing_block | missing_connection | missing_alarm_param | wrong_alarm_value
    key: str
    detail: str
    waived: bool = False
    justification: Optional[str] = None

    def to_json(self) -> dict:
        data = {"kind": self.kind, "key": self.key, "detail": self.detail}
        if self.waived:
            data["waived"] = True
            data["justification"] = self.justification
        return data


@dataclass
class SectionEval:
    section_id: str
    strategy_label: str
    candidate_strategy: Optional[str]
    strategy_match: bool
    block_total: int = 0
    block_matched: int = 0
    conn_total: int = 0
    conn_matched: int = 0
    alarm_total: int = 0
    alarm_matched: int = 0
    discrepancies: list[Discrepancy] = field(default_factory=list)
    candidate_counts: tuple[int, int, int, int, int] = (0, 0, 0, 0, 0)

    def to_json(self) -> dict:
        return {
            "section_id": self.section_id,
            "strategy_label": self.strategy_label,
            "candidate_strategy": self.candidate_strategy,
            "strategy_match": self.strategy_match,
            "block_total": self.block_total,
            "block_matched": self.block_matched,
            "conn_total": self.conn_total,
            "conn_matched": self.conn_matched,
            "alarm_total": self.alarm_total,
            "alarm_matched": self.alarm_matched,
            "candidate_counts": list(self.candidate_counts),
            "discrepancies": [d.to_json() for d in self.discrepancies],
        }


@dataclass
class BaselineSection:
    section_id: str
    graph: FbdGraph
    strategy: str
    alarm_pins: tuple[str, ...] = ()


@dataclass
class CandidateSection:
    section_id: str
    graph: Optional[FbdGraph]
    strategy: Optional[str]


def _alarm_pin_names(library: Optional[Library], type_name: str, extra: tuple[str, ...]) -> set[str]:
    names = set(extra)
    if library is not None:
        bt = library.get(type_name)
        if bt is not None:
            names.update(p.name for p in bt.pins if p.alarm)
            return names
    names.update(("H_LIM", "L_LIM", "HH_LIM", "LL_LIM"))
    return names


def _values_equal(a, b, rel_tol: float = 1e-9) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        scale = max(abs(a), abs(b))
        return abs(a - b) <= rel_tol * scale if scale else True
    return a == b


def eval_section(
    baseline: BaselineSection,
    candidate: CandidateSection,
    library: Optional[Library] = None,
) -> SectionEval:
    """Score one section's candidate diagram against its baseline.

    Strategy-relevant blocks and connections are those the labeled pattern
    template names; glue logic is deliberately not compared.
    """
    pattern = get_strategy(baseline.strategy)
    result = SectionEval(
        section_id=baseline.section_id,
        strategy_label=baseline.strategy,
        candidate_strategy=candidate.strategy,
        strategy_match=(candidate.strategy == baseline.strategy),
    )
    if not result.strategy_match:
        result.discrepancies.append(
            Discrepancy(
                "wrong_strategy",
                "strategy",
                f"baseline labeled '{baseline.strategy}', candidate selected '{candidate.strategy}'",
            )
        )

    cgraph = candidate.graph or FbdGraph(name="missing")
    result.candidate_counts = element_counts(cgraph)
    cand_blocks = {(normalize_tag(b.name), b.type_name) for b in cgraph.blocks}
    cand_conns = {
        (
            normalize_tag(c.source.owner),
            c.source.pin,
            normalize_tag(c.target.owner),
            c.target.pin,
        )
        for c in cgraph.connections
    }
    cand_params = {
        (normalize_tag(p.endpoint.owner), p.endpoint.pin): p.value for p in cgraph.parameters
    }

    # Q2M2: strategy-relevant block instantiation.
    relevant_types: set[str] = set()
    if pattern is not None:
        for _, allowed in pattern.roles:
            relevant_types.update(allowed)
    for block in baseline.graph.blocks:
        if block.type_name not in relevant_types:
            continue
        result.block_total += 1
        if (normalize_tag(block.name), block.type_name) in cand_blocks:
            result.block_matched += 1
        else:
            result.discrepancies.append(
                Discrepancy(
                    "missing_block",
                    f"block:{normalize_tag(block.name)}",
                    f"baseline block '{block.name}' ({block.type_name}) has no counterpart",
                )
            )

    # Q2M3: strategy connections (recomputed from the labeled pattern).
    if pattern is not None:
        stamp_strategy_connections(baseline.graph, pattern)
    for conn in baseline.graph.connections:
        if not conn.is_strategy:
            continue
        result.conn_total += 1
        key = (
            normalize_tag(conn.source.owner),
            conn.source.pin,
            normalize_tag(conn.target.owner),
            conn.target.pin,
        )
        if key in cand_conns:
            result.conn_matched += 1
        else:
            result.discrepancies.append(
                Discrepancy(
                    "missing_connection",
                    f"conn:{key[0]}.{key[1]}->{key[2]}.{key[3]}",
                    f"strategy connection {conn.source} -> {conn.target} has no counterpart",
                )
            )

    # Q2M4: alarm parameter fidelity.
    baseline_types = {b.name: b.type_name for b in baseline.graph.blocks}
    for param in baseline.graph.parameters:
        owner_type = baseline_types.get(param.endpoint.owner, "")
        alarm_pins = _alarm_pin_names(library, owner_type, baseline.alarm_pins)
        if param.endpoint.pin not in alarm_pins:
            continue
        result.alarm_total += 1
        key = (normalize_tag(param.endpoint.owner), param.endpoint.pin)
        got = cand_params.get(key)
        if got is None:
            result.discrepancies.append(
                Discrepancy(
                    "missing_alarm_param",
                    f"alarm:{key[0]}.{key[1]}",
                    f"alarm parameter {param.endpoint} := {param.value.text} is missing",
                )
            )
        elif not _values_equal(param.value.value, got.value):
            result.discrepancies.append(
                Discrepancy(
                    "wrong_alarm_value",
                    f"alarm:{key[0]}.{key[1]}",
                    f"alarm parameter {param.endpoint}: baseline {param.value.text}, candidate {got.text}",
                )
            )
        else:
            result.alarm_matched += 1
    return result


def review_time(graph: FbdGraph, weights: Optional[dict[str, float]] = None) -> float:
    """Estimated review minutes: element counts weighted per kind."""
    weights = weights or DEFAULT_WEIGHTS
    if any(w < 0 for w in weights.values()):
        raise ValueError("weights must be >= 0")
    blocks, functions, variables, connections, parameters = element_counts(graph)
    return (
        blocks * weights.get("block", 0.0)
        + functions * weights.get("function", 0.0)
        + variables * weights.get("variable", 0.0)
        + connections * weights.get("connection", 0.0)
        + parameters * weights.get("parameter", 0.0)
    )


def savings(
    review_minutes: float,
    rework_minutes: float,
    factor_low: float = DEFAULT_FACTORS[0],
    factor_high: float = DEFAULT_FACTORS[1],
) -> tuple[float, float]:
    """Labor saving percentages: manual construction is factor x review time,
    the automated path costs only the rework."""
    if review_minutes <= 0:
        raise ValueError("review_minutes must be > 0")
    out = []
    for factor in (factor_low, factor_high):
        manual = factor * review_minutes
        out.append(100.0 * (manual - rework_minutes) / manual)
    return out[0], out[1]


@dataclass
class Waiver:
    section_id: str
    discrepancy_key: str
    justification: str


def load_waivers(path: str | Path) -> list[Waiver]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [Waiver(w["section_id"], w["discrepancy_key"], w.get("justification", "")) for w in data]


_METRIC_OF_KIND = {
    "wrong_strategy": "strategy",
    "missing_block": "block",
    "missing_connection": "conn",
    "missing_alarm_param": "alarm",
    "wrong_alarm_value": "alarm",
}


def apply_waivers(sections: list[SectionEval], waivers: list[Waiver]) -> None:
    """Mark adjudicated discrepancies; the affected element counts as
    matched, mirroring a human reviewer accepting the deviation."""
    index = {(w.section_id, w.discrepancy_key): w for w in waivers}
    for section in sections:
        for disc in section.discrepancies:
            waiver = index.get((section.section_id, disc.key))
            if waiver is None or disc.waived:
                continue
            disc.waived = True
            disc.justification = waiver.justification
            metric = _METRIC_OF_KIND[disc.kind]
            if metric == "strategy":
                section.strategy_match = True
            elif metric == "block":
                section.block_matched += 1
            elif metric == "conn":
                section.conn_matched += 1
            else:
                section.alarm_matched += 1


@dataclass
class EvalReport:
    sections: list[SectionEval]
    q2m1: float
    q2m2: float
    q2m3: float
    q2m4: float
    review_minutes: dict[str, float]
    median_review_minutes: float
    estimated_cost: float
    savings_low: float
    savings_high: float

    def to_json(self) -> dict:
        return {
            "q2m1": self.q2m1,
            "q2m2": self.q2m2,
            "q2m3": self.q2m3,
            "q2m4": self.q2m4,
            "review_minutes": dict(self.review_minutes),
            "median_review_minutes": self.median_review_minutes,
            "estimated_cost_usd": self.estimated_cost,
            "savings_low_pct": self.savings_low,
            "savings_high_pct": self.savings_high,
            "sections": [s.to_json() for s in self.sections],
        }

    def unwaived_discrepancies(self) -> list[tuple[str, Discrepancy]]:
        out = []
        for section in self.sections:
            for disc in section.discrepancies:
                if not disc.waived:
                    out.append((section.section_id, disc))
        return out

    def to_markdown(self) -> str:
        lines = [
            "| Section | Strategy | Blocks | Connections | Alarms | Q2M1 | Q2M2 | Q2M3 | Q2M4 |",
            "|---|---|---|---|---|---|---|---|---|",
        ]

        def pct(matched: int, total: int) -> str:
            return "-" if total == 0 else f"{100.0 * matched / total:.1f}%"

        for s in self.sections:
            lines.append(
                f"| {s.section_id} | {s.strategy_label} "
                f"| {s.block_matched}/{s.block_total} "
                f"| {s.conn_matched}/{s.conn_total} "
                f"| {s.alarm_matched}/{s.alarm_total} "
                f"| {'100.0%' if s.strategy_match else '0.0%'} "
                f"| {pct(s.block_matched, s.block_total)} "
                f"| {pct(s.conn_matched, s.conn_total)} "
                f"| {pct(s.alarm_matched, s.alarm_total)} |"
            )
        lines.append(
            f"| **aggregate** |  |  |  |  "
            f"| **{self.q2m1:.1f}%** | **{self.q2m2:.1f}%** | **{self.q2m3:.1f}%** | **{self.q2m4:.1f}%** |"
        )
        lines.append("")
        lines.append(f"- Median review time: {self.median_review_minutes:.1f} min")
        lines.append(f"- Estimated LLM cost: {self.estimated_cost:.5f} USD")
        lines.append(f"- Labor saving: {self.savings_low:.1f}% to {self.savings_high:.1f}%")
        return "\n".join(lines) + "\n"


def _micro(pairs: list[tuple[int, int]]) -> float:
    matched = sum(m for m, _ in pairs)
    total = sum(t for _, t in pairs)
    return 100.0 * matched / total if total else 100.0


def build_report(
    section_evals: list[SectionEval],
    transcripts: Optional[list[LlmTranscript]] = None,
    prices: tuple[float, float] = DEFAULT_PRICES,
    weights: Optional[dict[str, float]] = None,
    factors: tuple[float, float] = DEFAULT_FACTORS,
    rework_minutes: float = DEFAULT_REWORK_MINUTES,
    waivers: Optional[list[Waiver]] = None,
) -> EvalReport:
    """Aggregate section scores into the report: micro-averaged percentages,
    review-time and saving estimates, token cost."""
    if not section_evals:
        raise ValueError("no sections to report on")
    if waivers:
        apply_waivers(section_evals, waivers)

    weights = weights or DEFAULT_WEIGHTS
    review = {}
    for s in section_evals:
        blocks, functions, variables, connections, parameters = s.candidate_counts
        review[s.section_id] = (
            blocks * weights.get("block", 0.0)
            + functions * weights.get("function", 0.0)
            + variables * weights.get("variable", 0.0)
            + connections * weights.get("connection", 0.0)
            + parameters * weights.get("parameter", 0.0)
        )
    median_review = statistics.median(review.values())

    cost = 0.0
    for transcript in transcripts or []:
        cost += cost_estimate(transcript, prices[0], prices[1])

    if median_review > 0:
        s_low, s_high = savings(median_review, rework_minutes, factors[0], factors[1])
    else:
        s_low = s_high = 0.0

    return EvalReport(
        sections=section_evals,
        q2m1=_micro([(1 if s.strategy_match else 0, 1) for s in section_evals]),
        q2m2=_micro([(s.block_matched, s.block_total) for s in section_evals]),
        q2m3=_micro([(s.conn_matched, s.conn_total) for s in section_evals]),
        q2m4=_micro([(s.alarm_matched, s.alarm_total) for s in section_evals]),
        review_minutes=review,
        median_review_minutes=median_review,
        estimated_cost=cost,
        savings_low=s_low,
        savings_high=s_high,
    )


def load_baseline_dir(directory: str | Path) -> list[BaselineSection]:
    """Baselines: one <id>.fbdpc per section with an <id>.label.json sidecar."""
    sections = []
    for path in sorted(Path(directory).glob("*.fbdpc")):
        label_path = path.with_suffix(".label.json")
        label = json.loads(label_path.read_text(encoding="utf-8"))
        sections.append(
            BaselineSection(
                section_id=path.stem,
                graph=parse_pseudocode(path.read_text(encoding="utf-8")),
                strategy=label["strategy"],
                alarm_pins=tuple(label.get("alarm_pins", ())),
            )
        )
    if not sections:
        raise ValueError(f"no baseline sections in {directory}")
    return sections


def load_candidate_dir(directory: str | Path, section_ids: list[str]) -> list[CandidateSection]:
    """Candidates from a pipeline output directory (<out>/<chunk_id>/...)."""
    out = []
    for sid in section_ids:
        run_json = Path(directory) / sid / "run.json"
        fbdpc = Path(directory) / sid / "diagram.fbdpc"
        graph = None
        strategy = None
        if run_json.exists():
            record = json.loads(run_json.read_text(encoding="utf-8"))
            strategy = (record.get("decision") or {}).get("selected")
        if fbdpc.exists():
            graph = parse_pseudocode(fbdpc.read_text(encoding="utf-8"))
        out.append(CandidateSection(section_id=sid, graph=graph, strategy=strategy))
    return out


def load_candidate_transcripts(directory: str | Path, section_ids: list[str]) -> list[LlmTranscript]:
    """Token usage recorded in the candidate run records, for cost roll-up."""
    from .llm import TranscriptEntry

    transcripts = []
    for sid in section_ids:
        run_json = Path(directory) / sid / "run.json"
        if not run_json.exists():
            continue
        record = json.loads(run_json.read_text(encoding="utf-8"))
        transcript = LlmTranscript()
        for entry in record.get("transcript") or []:
            transcript.entries.append(
                TranscriptEntry(
                    step_name=entry.get("step_name", ""),
                    request=[],
                    response="",
                    input_tokens=int(entry.get("input_tokens", 0)),
                    output_tokens=int(entry.get("output_tokens", 0)),
                    wall_time=float(entry.get("wall_time", 0.0)),
                )
            )
        transcripts.append(transcript)
    return transcripts
