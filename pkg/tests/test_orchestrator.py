from __future__ import annotations

import json
import shutil

import pytest

from fbdgen.fblibrary import strategy_catalog
from fbdgen.ir import element_counts
from fbdgen.llm import ReplayClient, ScriptedClient
from fbdgen.narrative import extract_chunks, make_plan, parse_narrative
from fbdgen.orchestrator import (
    EmptyChunk,
    PipelineConfig,
    PromptSet,
    UnparseableResponse,
    retrieve_existing_logic,
    run_chunk,
    run_pipeline,
    select_block_types,
    select_strategy,
)

CFG = PipelineConfig(workers=1)


def chunks_of(path):
    narrative = parse_narrative(path.read_text(encoding="utf-8"))
    return extract_chunks(narrative, make_plan(narrative, "by_section"))


@pytest.fixture(scope="module")
def ammonium_chunks(ammonium_path):
    return chunks_of(ammonium_path)


def test_select_block_types_replay(ammonium_chunks, library, ammonium_archive):
    client = ReplayClient(ammonium_archive)
    names, warnings = select_block_types(ammonium_chunks[1], library, client)
    assert "ANALOG_IN" in names  # LT-104 integration needs it
    assert "RATIO_CONTROL" in names
    assert warnings == []


def test_select_block_types_drops_unknown(library, ammonium_chunks):
    client = ScriptedClient(lambda s, m: '["ANALOG_IN", "NO_SUCH_BLOCK"]')
    names, warnings = select_block_types(ammonium_chunks[0], library, client)
    assert names == ["ANALOG_IN"]
    assert any("NO_SUCH_BLOCK" in w for w in warnings)


def test_select_block_types_empty_falls_back_to_all(library, ammonium_chunks):
    client = ScriptedClient(lambda s, m: "[]")
    names, warnings = select_block_types(ammonium_chunks[0], library, client)
    assert names == library.type_names()
    assert any("whole library" in w for w in warnings)


def test_select_block_types_requires_tags(library, ammonium_chunks):
    chunk = ammonium_chunks[0]
    bare = type(chunk)(chunk_id="x", source_section_ids=[], text="t", tags=[])
    with pytest.raises(EmptyChunk):
        select_block_types(bare, library, ScriptedClient(lambda s, m: "[]"))


def test_select_strategy_replay_auto(ammonium_chunks, ammonium_archive):
    client = ReplayClient(ammonium_archive)
    decision = select_strategy(ammonium_chunks[1], strategy_catalog(), client, 0.8)
    assert decision.selected == "ratio"
    assert decision.decided_by == "auto"
    assert decision.candidates[0].confidence >= 0.9


def test_select_strategy_below_threshold_awaits(ammonium_chunks):
    response = json.dumps(
        {"candidates": [
            {"strategy": "ratio", "confidence": 0.55, "rationale": "a"},
            {"strategy": "cascade", "confidence": 0.45, "rationale": "b"},
        ]}
    )
    client = ScriptedClient(lambda s, m: response)
    decision = select_strategy(ammonium_chunks[1], strategy_catalog(), client, 0.8)
    assert decision.selected is None
    assert decision.decided_by is None
    assert [c.strategy for c in decision.candidates] == ["ratio", "cascade"]


def test_select_strategy_repairs_bad_json(ammonium_chunks):
    responses = iter(["not json at all", '{"candidates": [{"strategy": "pid", "confidence": 0.9}]}'])
    client = ScriptedClient(lambda s, m: next(responses))
    decision = select_strategy(ammonium_chunks[0], strategy_catalog(), client, 0.8)
    assert decision.selected == "pid"


def test_select_strategy_unparseable_after_repair(ammonium_chunks):
    client = ScriptedClient(lambda s, m: "garbage with no braces")
    with pytest.raises(UnparseableResponse):
        select_strategy(ammonium_chunks[0], strategy_catalog(), client, 0.8)


def test_retrieve_existing_logic(tmp_path, ammonium_chunks):
    assert retrieve_existing_logic(ammonium_chunks[1], None) is None
    assert retrieve_existing_logic(ammonium_chunks[1], tmp_path) is None  # empty repo

    (tmp_path / "old.fbdpc").write_text(
        "DIAGRAM old\n"
        "VAR_INPUT RAW : REAL\n"
        "BLOCK TIC-103 : PID_BASIC\n"
        "BLOCK ZZ-999 : PID_BASIC\n"
        "PARAM TIC-103.SP := 55.0\n"
        "CONNECT RAW -> TIC-103.PV\n"
        "CONNECT ZZ-999.OUT -> TIC-103.SP\n"
    )
    found = retrieve_existing_logic(ammonium_chunks[1], tmp_path)
    assert found is not None
    names = found.instance_names()
    assert "TIC-103" in names
    assert "RAW" in names and "ZZ-999" in names  # incident endpoints kept
    assert len(found.connections) == 2
    assert len(found.parameters) == 1

    unrelated = type(ammonium_chunks[0])(
        chunk_id="x", source_section_ids=[], text="t", tags=ammonium_chunks[9].tags
    )
    assert retrieve_existing_logic(unrelated, tmp_path) is None


def test_run_chunk_replay_completes_with_paper_counts(ammonium_chunks, library, ammonium_archive):
    client = ReplayClient(ammonium_archive)
    run = run_chunk(ammonium_chunks[1], library, client, CFG)
    assert run.status == "completed"
    assert element_counts(run.graph) == (11, 3, 11, 32, 24)
    assert run.repair_rounds == 0
    assert run.decision.selected == "ratio"
    assert run.validation.ok
    params = {str(p.endpoint): p.value.value for p in run.graph.parameters}
    assert params["LT-104.H_LIM"] == 90.0
    assert params["LT-104.L_LIM"] == 20.0
    flagged = sum(1 for c in run.graph.connections if c.is_strategy)
    assert flagged == 4
    assert run.strategy_match["satisfied"] is True


def test_run_chunk_filters_transcript_to_its_own_steps(ammonium_chunks, library, ammonium_archive):
    client = ReplayClient(ammonium_archive)
    run1 = run_chunk(ammonium_chunks[0], library, client, CFG)
    run2 = run_chunk(ammonium_chunks[2], library, client, CFG)
    assert all(e.step_name.startswith(run1.run_id) for e in run1.transcript_entries)
    assert all(e.step_name.startswith(run2.run_id) for e in run2.transcript_entries)
    assert len(client.transcript.entries) == len(run1.transcript_entries) + len(run2.transcript_entries)


def test_human_gate_blocks_generation(ammonium_chunks, library):
    # Low-confidence selection: the run must stop before any chain prompt.
    response = json.dumps({"candidates": [{"strategy": "ratio", "confidence": 0.5}]})

    def script(step, msgs):
        if step.endswith("select_blocks"):
            return '["ANALOG_IN"]'
        if step.endswith("select_strategy"):
            return response
        raise AssertionError(f"generation step ran behind the human gate: {step}")

    client = ScriptedClient(script)
    run = run_chunk(ammonium_chunks[1], library, client, CFG)
    assert run.status == "awaiting_decision"
    assert run.graph is None
    steps = {e.step_name.split(":", 1)[1] for e in run.transcript_entries}
    assert steps == {"select_blocks", "select_strategy"}


def test_human_override_resumes_with_other_strategy(ammonium_chunks, library):
    low_confidence = json.dumps(
        {"candidates": [
            {"strategy": "ratio", "confidence": 0.55, "rationale": "a"},
            {"strategy": "pid", "confidence": 0.45, "rationale": "b"},
        ]}
    )

    def script(step, msgs):
        _, _, name = step.partition(":")
        if name == "select_blocks":
            return '["ANALOG_IN", "PID_CASCADE", "PID_BASIC", "VALVE_ELECTRIC"]'
        if name == "select_strategy":
            return low_confidence
        return (
            "DIAGRAM d\nVAR_INPUT X : REAL\nVAR_INPUT Y : REAL\n"
            "BLOCK LT-1 : ANALOG_IN\nBLOCK FT-1 : ANALOG_IN\n"
            "BLOCK LIC-1 : PID_CASCADE\nBLOCK FIC-1 : PID_BASIC\nBLOCK FV-1 : VALVE_ELECTRIC\n"
            "CONNECT X -> LT-1.IN\nCONNECT Y -> FT-1.IN\n"
            "CONNECT LT-1.PV -> LIC-1.PV\nCONNECT FT-1.PV -> FIC-1.PV\n"
            "CONNECT LIC-1.SP_OUT -> FIC-1.SP\nCONNECT FIC-1.OUT -> FV-1.CMD\n"
            "PARAM LIC-1.SP := 65.0\n"
        )

    from fbdgen.orchestrator import resume_run

    client = ScriptedClient(script)
    run = run_chunk(ammonium_chunks[3], library, client, CFG)
    assert run.status == "awaiting_decision"

    # 'cascade' is not among the candidates; the override records it.
    run = resume_run(run, library, client, CFG, decision="cascade")
    assert run.status == "completed"
    assert run.decision.selected == "cascade"
    assert run.decision.decided_by == "human"
    assert any(c.strategy == "cascade" for c in run.decision.candidates)
    assert run.strategy_match["satisfied"] is True


def test_repair_round_fixes_validation_error(library, fixtures_dir):
    chunks = chunks_of(fixtures_dir / "narratives" / "dosing_skid.md")
    client = ReplayClient(fixtures_dir / "replay" / "dosing_ok")
    run = run_chunk(chunks[0], library, client, CFG)
    assert run.status == "completed"
    assert run.repair_rounds == 1
    assert run.validation.ok


def test_repair_cap_fails_run(library, fixtures_dir):
    chunks = chunks_of(fixtures_dir / "narratives" / "dosing_skid.md")
    client = ReplayClient(fixtures_dir / "replay" / "dosing_fail")
    run = run_chunk(chunks[0], library, client, PipelineConfig(workers=1, repair_cap=2))
    assert run.status == "failed"
    assert run.repair_rounds == 2
    assert "KIND_MISMATCH" in (run.error or "") or not run.validation.ok


def test_awaiting_run_record_is_resumable_from_disk(tmp_path, ammonium_chunks, library, ammonium_archive):
    from fbdgen.orchestrator import load_run_record, resume_run, write_artifacts

    # Force the gate with a high threshold, persist, then reload and resume.
    gated = PipelineConfig(workers=1, auto_threshold=0.99)
    client = ReplayClient(ammonium_archive)
    run = run_chunk(ammonium_chunks[1], library, client, gated)
    assert run.status == "awaiting_decision"
    write_artifacts(run, tmp_path, library, gated)

    record = json.loads((tmp_path / run.run_id / "run.json").read_text())
    revived = load_run_record(record)
    assert revived.status == "awaiting_decision"
    assert revived.chunk.char_count == 3826
    assert [e.step_name for e in revived.transcript_entries] == [
        e.step_name for e in run.transcript_entries
    ]

    finished = resume_run(revived, library, ReplayClient(ammonium_archive), CFG, decision="ratio")
    assert finished.status == "completed"
    assert element_counts(finished.graph) == (11, 3, 11, 32, 24)
    assert finished.decision.decided_by == "human"
    steps = [e.step_name.split(":")[-1] for e in finished.transcript_entries]
    assert steps[:2] == ["select_blocks", "select_strategy"]
    assert steps[-1] == "review"


def test_run_pipeline_batch(tmp_path, ammonium_path, library, ammonium_archive):
    narrative = parse_narrative(ammonium_path.read_text(encoding="utf-8"))
    plan = make_plan(narrative, "by_section")
    client = ReplayClient(ammonium_archive)
    runs = run_pipeline(ammonium_path, plan, library, client, tmp_path, PipelineConfig(workers=3))
    assert len(runs) == 10
    assert all(r.status == "completed" for r in runs)
    for run in runs:
        run_dir = tmp_path / run.run_id
        assert (run_dir / "run.json").exists()
        assert (run_dir / "diagram.fbdpc").exists()
        assert (run_dir / "diagram.xml").exists()
        assert (run_dir / "diagram.svg").exists()


def test_run_pipeline_isolates_poisoned_chunk(tmp_path, ammonium_path, library, ammonium_archive):
    poisoned = tmp_path / "archive"
    shutil.copytree(ammonium_archive, poisoned)
    # Remove every entry of one section's chain: its run misses the replay.
    victim = "section-5-steam-header-pressure"
    removed = 0
    for path in poisoned.glob("*.json"):
        entry = json.loads(path.read_text())
        if entry["step"].startswith(f"{victim}:"):
            path.unlink()
            removed += 1
    assert removed > 0

    narrative = parse_narrative(ammonium_path.read_text(encoding="utf-8"))
    plan = make_plan(narrative, "by_section")
    out = tmp_path / "out"
    runs = run_pipeline(ammonium_path, plan, library, ReplayClient(poisoned), out, PipelineConfig(workers=4))
    by_status = {r.run_id: r.status for r in runs}
    assert by_status.pop(victim) == "failed"
    assert all(status == "completed" for status in by_status.values())
    failed_record = json.loads((out / victim / "run.json").read_text())
    assert "ReplayMiss" in failed_record["error"]


def test_prompt_set_renders_placeholders(tmp_path):
    (tmp_path / "demo.txt").write_text("A {chunk_text} B {missing} C {json: \"x\"}")
    prompts = PromptSet(tmp_path)
    rendered = prompts.render("demo", chunk_text="X")
    assert rendered == 'A X B {missing} C {json: "x"}'


def test_existing_logic_lands_in_context_and_provenance(tmp_path, ammonium_chunks, library, ammonium_archive):
    repo = tmp_path / "repo"
    repo.mkdir()
    (repo / "old.fbdpc").write_text("DIAGRAM old\nBLOCK TIC-103 : PID_BASIC\nPARAM TIC-103.SP := 55.0\n")
    config = PipelineConfig(workers=1, existing_logic_dir=str(repo))

    seen_prompts = []

    def script(step, msgs):
        seen_prompts.append(msgs[-1].content)
        _, _, name = step.partition(":")
        if name == "select_blocks":
            return '["PID_BASIC"]'
        if name == "select_strategy":
            return '{"candidates": [{"strategy": "pid", "confidence": 0.95}]}'
        return (
            "DIAGRAM d\nVAR_INPUT X : REAL\nBLOCK TIC-103 : PID_BASIC\n"
            "BLOCK TT-1 : ANALOG_IN\nBLOCK FV-1 : VALVE_ELECTRIC\n"
            "PARAM TIC-103.SP := 55.0\n"
            "CONNECT X -> TT-1.IN\nCONNECT TT-1.PV -> TIC-103.PV\nCONNECT TIC-103.OUT -> FV-1.CMD\n"
        )

    run = run_chunk(ammonium_chunks[1], library, ScriptedClient(script), config)
    assert run.status == "completed"
    assert "EXISTING LOGIC" in "".join(seen_prompts)
    assert "BLOCK TIC-103 : PID_BASIC" in run.provenance["existing_logic"]
