from __future__ import annotations

import random

import pytest

from fbdgen.evaluation import (
    BaselineSection,
    CandidateSection,
    Waiver,
    apply_waivers,
    build_report,
    eval_section,
    load_baseline_dir,
    load_candidate_dir,
    normalize_tag,
    review_time,
    savings,
)
from fbdgen.ir import (
    BlockInstance,
    DataKind,
    Endpoint,
    FbdGraph,
    Literal,
    ParameterSetting,
    parse_pseudocode,
)
from fbdgen.llm import LlmTranscript, TranscriptEntry


def test_normalize_tag():
    assert normalize_tag("LT-104") == "LT104"
    assert normalize_tag("lt_104") == "LT104"
    assert normalize_tag("FFIC-102") == normalize_tag("FFIC102")


def baseline_from_fixture(neutralizer_graph):
    return BaselineSection(
        section_id="s2", graph=neutralizer_graph, strategy="ratio"
    )


def test_identity_scores_all_hundred(neutralizer_graph, library, neutralizer_text):
    baseline = baseline_from_fixture(neutralizer_graph)
    candidate = CandidateSection("s2", parse_pseudocode(neutralizer_text), "ratio")
    result = eval_section(baseline, candidate, library)
    assert result.strategy_match
    assert result.block_matched == result.block_total > 0
    assert result.conn_matched == result.conn_total == 4
    assert result.alarm_matched == result.alarm_total == 7
    assert result.discrepancies == []


def test_normalization_equivalent_renaming_keeps_metrics(neutralizer_graph, library, neutralizer_text):
    renamed = neutralizer_text.replace("FFIC-102", "ffic_102").replace("LT-104", "lt104")
    candidate = CandidateSection("s2", parse_pseudocode(renamed), "ratio")
    result = eval_section(baseline_from_fixture(neutralizer_graph), candidate, library)
    assert result.block_matched == result.block_total
    assert result.conn_matched == result.conn_total
    assert result.alarm_matched == result.alarm_total


PID_SECTION = (
    "DIAGRAM digester\n"
    "VAR_INPUT RAW : REAL\n"
    "BLOCK LT-103 : ANALOG_IN\n"
    "BLOCK LIC-103 : PID_BASIC\n"
    "BLOCK LV-103 : VALVE_ELECTRIC\n"
    "CONNECT RAW -> LT-103.IN\n"
    "CONNECT LT-103.PV -> LIC-103.PV\n"
    "CONNECT LIC-103.OUT -> LV-103.CMD\n"
)


def test_missing_valve_block_is_one_discrepancy(library):
    baseline = BaselineSection("s3", parse_pseudocode(PID_SECTION), "pid")
    butchered = parse_pseudocode(PID_SECTION)
    butchered.blocks = [b for b in butchered.blocks if b.name != "LV-103"]
    butchered.connections = [
        c for c in butchered.connections if "LV-103" not in (c.source.owner, c.target.owner)
    ]
    result = eval_section(baseline, CandidateSection("s3", butchered, "pid"), library)
    missing = [d for d in result.discrepancies if d.kind == "missing_block"]
    assert len(missing) == 1
    assert "LV-103" in missing[0].detail and "VALVE_ELECTRIC" in missing[0].detail
    assert result.block_matched == result.block_total - 1
    # the valve connection was a strategy edge too
    assert result.conn_matched == result.conn_total - 1


def test_glue_blocks_are_not_compared(neutralizer_graph, library, neutralizer_text):
    # Valves are not part of the ratio template, so dropping one does not
    # touch Q2M2 for a ratio-labeled section.
    butchered = parse_pseudocode(neutralizer_text)
    butchered.blocks = [b for b in butchered.blocks if b.name != "FV-101"]
    butchered.connections = [
        c for c in butchered.connections if "FV-101" not in (c.source.owner, c.target.owner)
    ]
    result = eval_section(
        baseline_from_fixture(neutralizer_graph), CandidateSection("s2", butchered, "ratio"), library
    )
    assert result.block_matched == result.block_total
    assert result.discrepancies == []


def test_wrong_strategy_counts_against_q2m1(neutralizer_graph, library, neutralizer_text):
    candidate = CandidateSection("s2", parse_pseudocode(neutralizer_text), "cascade")
    result = eval_section(baseline_from_fixture(neutralizer_graph), candidate, library)
    assert not result.strategy_match
    assert any(d.kind == "wrong_strategy" for d in result.discrepancies)


def _alarm_pair(n_alarms: int, n_bad: int):
    """Synthetic baseline/candidate sharing one ANALOG_IN per alarm."""
    baseline = FbdGraph(name="b")
    candidate = FbdGraph(name="c")
    for i in range(n_alarms):
        name = f"XT-{i:03d}"
        baseline.blocks.append(BlockInstance(name, "ANALOG_IN"))
        candidate.blocks.append(BlockInstance(name, "ANALOG_IN"))
        value = Literal(DataKind.REAL, f"{50 + i}.0")
        baseline.parameters.append(ParameterSetting(Endpoint(name, "H_LIM"), value))
        if i >= n_bad:
            candidate.parameters.append(ParameterSetting(Endpoint(name, "H_LIM"), value))
        elif i % 2 == 0:
            candidate.parameters.append(
                ParameterSetting(Endpoint(name, "H_LIM"), Literal(DataKind.REAL, "999.0"))
            )
    return baseline, candidate


def test_alarm_fidelity_168_of_173(library):
    baseline, candidate = _alarm_pair(173, 5)
    result = eval_section(
        BaselineSection("s", baseline, "pid"),
        CandidateSection("s", candidate, "pid"),
        library,
    )
    assert (result.alarm_matched, result.alarm_total) == (168, 173)
    report = build_report([result])
    assert report.q2m4 == pytest.approx(97.1, abs=0.05)
    kinds = {d.kind for d in result.discrepancies if d.kind.endswith("alarm_value") or d.kind.endswith("alarm_param")}
    assert kinds == {"wrong_alarm_value", "missing_alarm_param"}


def test_alarm_value_tolerance(library):
    baseline = FbdGraph(name="b", blocks=[BlockInstance("XT-1", "ANALOG_IN")])
    candidate = FbdGraph(name="c", blocks=[BlockInstance("XT-1", "ANALOG_IN")])
    baseline.parameters.append(ParameterSetting(Endpoint("XT-1", "H_LIM"), Literal(DataKind.REAL, "90.0")))
    candidate.parameters.append(
        ParameterSetting(Endpoint("XT-1", "H_LIM"), Literal(DataKind.REAL, "90.000000000000005"))
    )
    result = eval_section(
        BaselineSection("s", baseline, "pid"), CandidateSection("s", candidate, "pid"), library
    )
    assert result.alarm_matched == 1


def test_review_time_fixture_weights(neutralizer_graph):
    minutes = review_time(neutralizer_graph)
    assert minutes == pytest.approx(74.5)
    assert 19.4 <= minutes <= 114.7
    assert review_time(FbdGraph(name="e")) == 0.0
    assert review_time(neutralizer_graph, {k: 0.0 for k in ("block", "function", "variable", "connection", "parameter")}) == 0.0
    with pytest.raises(ValueError):
        review_time(neutralizer_graph, {"block": -1.0})


def test_savings_paper_example():
    low, high = savings(42.8, 5.0, 2.0, 3.0)
    assert low == pytest.approx(94.2, abs=0.05)
    assert high == pytest.approx(96.1, abs=0.05)
    assert 2 * 42.8 == pytest.approx(85.6)
    assert 3 * 42.8 == pytest.approx(128.4)


def test_savings_zero_rework_is_total():
    assert savings(10.0, 0.0) == (100.0, 100.0)
    with pytest.raises(ValueError):
        savings(0.0, 1.0)


def test_monotonicity_removing_one_match(neutralizer_graph, library, neutralizer_text):
    baseline = baseline_from_fixture(neutralizer_graph)
    intact = eval_section(baseline, CandidateSection("s2", parse_pseudocode(neutralizer_text), "ratio"), library)

    damaged_graph = parse_pseudocode(neutralizer_text)
    damaged_graph.parameters = [
        p for p in damaged_graph.parameters if str(p.endpoint) != "LT-104.H_LIM"
    ]
    damaged = eval_section(baseline, CandidateSection("s2", damaged_graph, "ratio"), library)
    assert damaged.alarm_matched == intact.alarm_matched - 1
    assert damaged.block_matched == intact.block_matched
    assert damaged.conn_matched == intact.conn_matched
    assert len(damaged.discrepancies) == len(intact.discrepancies) + 1


def test_build_report_micro_average_property():
    rng = random.Random(5)
    sections = []
    for i in range(12):
        total = rng.randint(1, 20)
        matched = rng.randint(0, total)
        from fbdgen.evaluation import SectionEval

        sections.append(
            SectionEval(
                section_id=f"s{i}",
                strategy_label="pid",
                candidate_strategy="pid",
                strategy_match=True,
                block_total=total,
                block_matched=matched,
                conn_total=total,
                conn_matched=total,
                alarm_total=0,
                alarm_matched=0,
                candidate_counts=(1, 0, 0, 1, 0),
            )
        )
    report = build_report(sections)
    expected = 100.0 * sum(s.block_matched for s in sections) / sum(s.block_total for s in sections)
    assert report.q2m2 == pytest.approx(expected)
    assert report.q2m3 == 100.0
    assert report.q2m4 == 100.0  # no alarm totals anywhere


def test_sixty_five_perfect_sections_aggregate_to_hundred():
    from fbdgen.evaluation import SectionEval

    sections = [
        SectionEval(
            section_id=f"s{i}",
            strategy_label="pid",
            candidate_strategy="pid",
            strategy_match=True,
            block_total=3,
            block_matched=3,
            conn_total=2,
            conn_matched=2,
            alarm_total=2,
            alarm_matched=2,
            candidate_counts=(3, 0, 1, 4, 3),
        )
        for i in range(65)
    ]
    report = build_report(sections)
    assert report.q2m1 == report.q2m2 == report.q2m3 == report.q2m4 == 100.0


def test_connection_aggregate_141_of_143():
    from fbdgen.evaluation import SectionEval

    # Eleven sections of 13 strategy connections; two sections miss one each.
    sections = [
        SectionEval(
            section_id=f"s{i}",
            strategy_label="pid",
            candidate_strategy="pid",
            strategy_match=True,
            conn_total=13,
            conn_matched=12 if i < 2 else 13,
            candidate_counts=(1, 0, 0, 13, 0),
        )
        for i in range(11)
    ]
    report = build_report(sections)
    assert sum(s.conn_total for s in sections) == 143
    assert sum(s.conn_matched for s in sections) == 141
    assert report.q2m3 == pytest.approx(98.6, abs=0.05)


def test_single_section_report_equals_its_ratios(neutralizer_graph, library, neutralizer_text):
    baseline = baseline_from_fixture(neutralizer_graph)
    section = eval_section(baseline, CandidateSection("s2", parse_pseudocode(neutralizer_text), "ratio"), library)
    report = build_report([section])
    assert report.q2m1 == 100.0
    assert report.q2m2 == 100.0 * section.block_matched / section.block_total
    assert report.review_minutes["s2"] == pytest.approx(74.5)


def test_report_includes_cost():
    from fbdgen.evaluation import SectionEval

    section = SectionEval("s", "pid", "pid", True, candidate_counts=(1, 0, 0, 1, 0))
    transcript = LlmTranscript(entries=[TranscriptEntry("x", [], "", 25_000, 60_000, 0.0)])
    report = build_report([section], transcripts=[transcript])
    assert report.estimated_cost == pytest.approx(0.63125)


def test_waiver_restores_metric(library):
    baseline = BaselineSection("s2", parse_pseudocode(PID_SECTION), "pid")
    butchered = parse_pseudocode(PID_SECTION)
    butchered.blocks = [b for b in butchered.blocks if b.name != "LV-103"]
    butchered.connections = [
        c for c in butchered.connections if "LV-103" not in (c.source.owner, c.target.owner)
    ]
    section = eval_section(baseline, CandidateSection("s2", butchered, "pid"), library)
    assert section.block_matched < section.block_total
    key = next(d.key for d in section.discrepancies if d.kind == "missing_block")
    apply_waivers([section], [Waiver("s2", key, "narrative ambiguity; reviewer accepted")])
    assert section.block_matched == section.block_total
    waived = [d for d in section.discrepancies if d.waived]
    assert len(waived) == 1
    assert waived[0].justification.startswith("narrative ambiguity")


def test_report_markdown_and_json(neutralizer_graph, library, neutralizer_text):
    section = eval_section(
        baseline_from_fixture(neutralizer_graph),
        CandidateSection("s2", parse_pseudocode(neutralizer_text), "ratio"),
        library,
    )
    report = build_report([section])
    md = report.to_markdown()
    assert "| Section |" in md and "| s2 | ratio |" in md
    data = report.to_json()
    assert data["q2m1"] == 100.0
    assert data["sections"][0]["section_id"] == "s2"


def test_load_dirs_pair_up(fixtures_dir, tmp_path, library, ammonium_path, ammonium_archive):
    from fbdgen.llm import ReplayClient
    from fbdgen.narrative import make_plan, parse_narrative
    from fbdgen.orchestrator import PipelineConfig, run_pipeline

    narrative = parse_narrative(ammonium_path.read_text(encoding="utf-8"))
    runs = run_pipeline(
        ammonium_path,
        make_plan(narrative, "by_section"),
        library,
        ReplayClient(ammonium_archive),
        tmp_path,
        PipelineConfig(workers=2),
    )
    assert all(r.status == "completed" for r in runs)
    baselines = load_baseline_dir(fixtures_dir / "baselines" / "ammonium")
    candidates = load_candidate_dir(tmp_path, [b.section_id for b in baselines])
    sections = [eval_section(b, c, library) for b, c in zip(baselines, candidates)]
    report = build_report(sections)
    assert report.q2m1 == report.q2m2 == report.q2m3 == report.q2m4 == 100.0
    assert report.unwaived_discrepancies() == []
