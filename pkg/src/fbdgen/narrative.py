"""Control narrative ingestion and chunking.

Input format: Markdown with a level-1 title, one level-2 heading per
section, and an optional pipe table per section with the columns
Tag | Description | Kind | Range/Units. Everything else in a section is
prose and becomes its body.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .ir import is_identifier
from .llm import LlmClient, LlmUnavailable, ChatMessage


class NarrativeError(Exception):
    pass


class NoSections(NarrativeError):
    pass


class MalformedTable(NarrativeError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownSectionId(NarrativeError):
    pass


SIGNAL_KINDS = ("analog_in", "digital_in", "analog_out", "digital_out", "controller", "other")

# Keyword map applied to the Kind column, first match wins.
_KIND_KEYWORDS = (
    ("controller", "controller"),
    ("transmitter", "analog_in"),
    ("analyzer", "analog_in"),
    ("sensor", "analog_in"),
    ("switch", "digital_in"),
    ("status", "digital_in"),
    ("valve", "analog_out"),
    ("damper", "analog_out"),
    ("pump", "digital_out"),
    ("motor", "digital_out"),
    ("compressor", "digital_out"),
    ("heater", "digital_out"),
)


def classify_signal_kind(kind_text: str) -> str:
    lowered = kind_text.lower()
    for keyword, kind in _KIND_KEYWORDS:
        if keyword in lowered:
            return kind
    return "other"


@dataclass(frozen=True)
class TagEntry:
    tag: str
    description: str
    signal_kind: str
    range_units: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "description": self.description,
            "signal_kind": self.signal_kind,
            "range_units": self.range_units,
        }


@dataclass
class NarrativeSection:
    id: str
    heading: str
    body: str
    tag_table: list[TagEntry] = field(default_factory=list)


@dataclass
class ControlNarrative:
    title: str
    sections: list[NarrativeSection]
    source_path: str = ""

    def section(self, section_id: str) -> Optional[NarrativeSection]:
        for s in self.sections:
            if s.id == section_id:
                return s
        return None


@dataclass
class NarrativeChunk:
    chunk_id: str
    source_section_ids: list[str]
    text: str
    tags: list[TagEntry]

    @property
    def char_count(self) -> int:
        return len(self.text)

    def to_json(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "source_section_ids": list(self.source_section_ids),
            "text": self.text,
            "char_count": self.char_count,
            "tags": [t.to_json() for t in self.tags],
        }


@dataclass(frozen=True)
class ChunkingPlan:
    strategy: str  # whole_document | by_section | by_selection
    selections: Optional[tuple[tuple[str, ...], ...]] = None

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "selections": [list(group) for group in self.selections] if self.selections else None,
        }


def _slugify(heading: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", heading.lower()).strip("-")
    return slug or "section"


_TABLE_ROW_RE = re.compile(r"^\s*\|(.+)\|\s*$")
_TABLE_SEPARATOR_RE = re.compile(r"^\s*\|[\s:|-]+\|\s*$")


def _split_row(line: str) -> list[str]:
    inner = line.strip().strip("|")
    return [cell.strip() for cell in inner.split("|")]


def parse_narrative(markdown_text: str, source_path: str = "") -> ControlNarrative:
    """Parse a narrative document into sections with tag tables.

    The first pipe table inside a section becomes its tag table; rows must
    have four columns and a tag that is a legal identifier, otherwise the
    document is rejected with the offending line number.
    """
    lines = markdown_text.splitlines()
    title = ""
    sections: list[NarrativeSection] = []
    seen_ids: set[str] = set()

    current: Optional[dict] = None

    def finish_current() -> None:
        if current is None:
            return
        body = "\n".join(current["body_lines"]).strip("\n").strip()
        sections.append(
            NarrativeSection(
                id=current["id"],
                heading=current["heading"],
                body=body,
                tag_table=current["tags"],
            )
        )

    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("# ") and not line.startswith("## "):
            if not title:
                title = line[2:].strip()
            i += 1
            continue
        if line.startswith("## "):
            finish_current()
            heading = line[3:].strip()
            slug = _slugify(heading)
            base, n = slug, 2
            while slug in seen_ids:
                slug = f"{base}-{n}"
                n += 1
            seen_ids.add(slug)
            current = {"id": slug, "heading": heading, "body_lines": [], "tags": [], "has_table": False}
            i += 1
            continue
        if current is not None and not current["has_table"] and _TABLE_ROW_RE.match(line):
            header = _split_row(line)
            if i + 1 >= len(lines) or not _TABLE_SEPARATOR_RE.match(lines[i + 1]):
                # Not a table after all; treat as prose.
                current["body_lines"].append(line)
                i += 1
                continue
            if len(header) != 4:
                raise MalformedTable(i + 1, f"tag table needs 4 columns, found {len(header)}")
            entries: list[TagEntry] = []
            seen_tags: set[str] = set()
            j = i + 2
            while j < len(lines) and _TABLE_ROW_RE.match(lines[j]):
                cells = _split_row(lines[j])
                if len(cells) != 4:
                    raise MalformedTable(j + 1, f"row has {len(cells)} columns, expected 4")
                tag, description, kind_text, range_units = cells
                if not is_identifier(tag):
                    raise MalformedTable(j + 1, f"tag {tag!r} is not a valid identifier")
                if tag in seen_tags:
                    raise MalformedTable(j + 1, f"tag {tag!r} appears twice in the section table")
                seen_tags.add(tag)
                entries.append(
                    TagEntry(tag, description, classify_signal_kind(kind_text), range_units or None)
                )
                j += 1
            current["tags"] = entries
            current["has_table"] = True
            i = j
            continue
        if current is not None:
            current["body_lines"].append(line)
        i += 1
    finish_current()

    if not sections:
        raise NoSections("narrative has no level-2 sections")
    for section in sections:
        if not section.body:
            raise NarrativeError(f"section '{section.id}' has an empty body")
    return ControlNarrative(title=title or "Untitled", sections=sections, source_path=source_path)


def make_plan(
    narrative: ControlNarrative,
    strategy: str,
    selections: Optional[list[list[str]]] = None,
) -> ChunkingPlan:
    """Build a chunking plan; by_selection requires explicit section groups."""
    if strategy not in ("whole_document", "by_section", "by_selection"):
        raise NarrativeError(f"unknown chunking strategy '{strategy}'")
    if strategy == "by_selection":
        if not selections:
            raise NarrativeError("by_selection requires section groups")
        known = {s.id for s in narrative.sections}
        for group in selections:
            for sid in group:
                if sid not in known:
                    raise UnknownSectionId(sid)
        return ChunkingPlan(strategy, tuple(tuple(group) for group in selections))
    if selections:
        raise NarrativeError(f"selections are only valid with by_selection, not {strategy}")
    if strategy == "by_section":
        return ChunkingPlan(strategy, tuple((s.id,) for s in narrative.sections))
    return ChunkingPlan(strategy, None)


def extract_chunks(narrative: ControlNarrative, plan: ChunkingPlan) -> list[NarrativeChunk]:
    """One chunk per plan group: bodies concatenated, tag tables unioned
    (first occurrence wins), document order preserved."""
    if plan.strategy == "whole_document":
        groups: list[tuple[str, ...]] = [tuple(s.id for s in narrative.sections)]
        chunk_ids = ["document"]
    elif plan.strategy == "by_section":
        groups = [(s.id,) for s in narrative.sections]
        chunk_ids = [s.id for s in narrative.sections]
    else:
        groups = list(plan.selections or ())
        chunk_ids = ["+".join(g) for g in groups]

    chunks: list[NarrativeChunk] = []
    for chunk_id, group in zip(chunk_ids, groups):
        bodies: list[str] = []
        tags: list[TagEntry] = []
        seen: set[str] = set()
        for sid in group:
            section = narrative.section(sid)
            if section is None:
                raise UnknownSectionId(sid)
            bodies.append(section.body)
            for tag in section.tag_table:
                if tag.tag not in seen:
                    seen.add(tag.tag)
                    tags.append(tag)
        chunks.append(
            NarrativeChunk(
                chunk_id=chunk_id,
                source_section_ids=list(group),
                text="\n\n".join(bodies),
                tags=tags,
            )
        )
    return chunks


_SUMMARIZE_PROMPT = (
    "Condense the following control narrative chunk. Keep every tag name, "
    "every numeric value and every interlock or alarm condition; drop "
    "formatting boilerplate and redundancy. Reply with the condensed text only.\n\n{chunk_text}"
)


@dataclass
class SummaryResult:
    chunk: NarrativeChunk
    summarized: bool
    original_text: str
    warning: Optional[str] = None


def summarize_chunk(chunk: NarrativeChunk, llm: Optional[LlmClient]) -> SummaryResult:
    """Optionally shrink a chunk via the LLM; tags are never touched.

    When no client is available the original chunk passes through with a
    warning instead of failing the pipeline.
    """
    if llm is None:
        return SummaryResult(chunk, False, chunk.text, warning="summarization skipped: no LLM client")
    try:
        text, _, _ = llm.complete(
            [ChatMessage("user", _SUMMARIZE_PROMPT.replace("{chunk_text}", chunk.text))],
            step_name=f"summarize:{chunk.chunk_id}",
        )
    except LlmUnavailable as exc:
        return SummaryResult(chunk, False, chunk.text, warning=f"summarization skipped: {exc}")
    condensed = NarrativeChunk(
        chunk_id=chunk.chunk_id,
        source_section_ids=list(chunk.source_section_ids),
        text=text.strip(),
        tags=list(chunk.tags),
    )
    return SummaryResult(condensed, True, chunk.text)
