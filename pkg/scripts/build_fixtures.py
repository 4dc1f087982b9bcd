#!/usr/bin/env python3
"""Regenerate the committed test fixtures: replay archives, baselines and
golden files.

The replay archives are produced by running the real pipeline against the
fixture narratives with a scripted client wrapped in a recorder, so the
archive keys always match the prompts the orchestrator actually sends. Run
this after changing prompt templates, the bundled library, or the designed
section diagrams, then commit the result.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from fbdgen.fblibrary import context_pack, get_strategy, load_bundled_library
from fbdgen.ir import parse_pseudocode
from fbdgen.llm import ChatMessage, RecordingClient, ScriptedClient
from fbdgen.narrative import make_plan, parse_narrative, extract_chunks, summarize_chunk
from fbdgen.orchestrator import PipelineConfig, run_pipeline

FIXTURES = REPO / "fixtures"

# ---------------------------------------------------------------------------
# Designed diagrams for the ammonium nitrate narrative, one per section.
# Statement groups mirror the chain steps: declarations, main signal path,
# process parameters, interlock logic, alarm configuration.
# ---------------------------------------------------------------------------

def sec(n: int, rest: str) -> str:
    return f"section-{n}-{rest}"


SECTIONS: dict[str, dict] = {
    sec(1, "ammonia-feed-storage"): {
        "blocks": ["ANALOG_IN", "DIGITAL_OUT"],
        "strategy": [("on_off", 0.9, "high level closes the feed shutoff valve"),
                     ("pid", 0.05, "no modulating loop is described")],
        "decl": [
            "VAR_INPUT RAW_LT201 : REAL",
            "VAR_OUTPUT STORAGE_PV : REAL",
            "VAR_OUTPUT FEED_CUTOFF : BOOL",
            "BLOCK LT-201 : ANALOG_IN",
            "BLOCK XV-201 : DIGITAL_OUT",
        ],
        "main": [
            "CONNECT RAW_LT201 -> LT-201.IN",
            "CONNECT LT-201.PV -> STORAGE_PV",
            "CONNECT LT-201.H_ALM -> XV-201.IN",
            "CONNECT XV-201.OUT -> FEED_CUTOFF",
        ],
        "params": [
            "PARAM LT-201.SCALE_MIN := 0.0",
            "PARAM LT-201.SCALE_MAX := 100.0",
        ],
        "interlock": [],
        "alarm": ["PARAM LT-201.H_LIM := 92.0"],
    },
    sec(2, "neutralization-reactor"): {
        "blocks": ["ANALOG_IN", "PID_BASIC", "RATIO_CONTROL", "VALVE_ELECTRIC", "DIGITAL_IN"],
        "strategy": [("ratio", 0.93, "acid flow follows ammonia flow at a fixed 0.45 ratio"),
                     ("feedforward", 0.04, "the wild stream also feeds a station"),
                     ("cascade", 0.02, "two controllers are present but no setpoint cascade")],
        "decl": [
            "VAR_INPUT RAW_FT101 : REAL",
            "VAR_INPUT RAW_FT102 : REAL",
            "VAR_INPUT RAW_LT104 : REAL",
            "VAR_INPUT RAW_TT103 : REAL",
            "VAR_INPUT SCRUBBER_RUN : BOOL",
            "VAR_INPUT FLOW_SP : REAL",
            "VAR_OUTPUT LEVEL_PV : REAL",
            "VAR_OUTPUT LEVEL_HI_ALM : BOOL",
            "VAR_OUTPUT LEVEL_LO_ALM : BOOL",
            "VAR_OUTPUT ILK_TRIP : BOOL",
            "VAR_OUTPUT HEATER_CMD : REAL",
            "BLOCK FT-101 : ANALOG_IN",
            "BLOCK FT-102 : ANALOG_IN",
            "BLOCK LT-104 : ANALOG_IN",
            "BLOCK TT-103 : ANALOG_IN",
            "BLOCK FIC-101 : PID_BASIC",
            "BLOCK FIC-102 : PID_BASIC",
            "BLOCK TIC-103 : PID_BASIC",
            "BLOCK FFIC-102 : RATIO_CONTROL",
            "BLOCK FV-101 : VALVE_ELECTRIC",
            "BLOCK FV-102 : VALVE_ELECTRIC",
            "BLOCK VS-107 : DIGITAL_IN",
        ],
        "main": [
            "CONNECT RAW_FT101 -> FT-101.IN",
            "CONNECT RAW_FT102 -> FT-102.IN",
            "CONNECT RAW_LT104 -> LT-104.IN",
            "CONNECT RAW_TT103 -> TT-103.IN",
            "CONNECT SCRUBBER_RUN -> VS-107.IN",
            "CONNECT FLOW_SP -> FIC-101.SP",
            "CONNECT FT-101.PV -> FIC-101.PV",
            "CONNECT FT-101.PV -> FFIC-102.PV_WILD",
            "CONNECT FT-102.PV -> FIC-102.PV",
            "CONNECT FFIC-102.SP_OUT -> FIC-102.SP",
            "CONNECT FIC-101.OUT -> FV-101.CMD",
            "CONNECT FIC-102.OUT -> FV-102.CMD",
            "CONNECT TT-103.PV -> TIC-103.PV",
            "CONNECT TIC-103.OUT -> HEATER_CMD",
            "CONNECT LT-104.PV -> LEVEL_PV",
        ],
        "params": [
            "PARAM LT-104.SCALE_MIN := 0.0",
            "PARAM LT-104.SCALE_MAX := 100.0",
            "PARAM FT-101.SCALE_MIN := 0.0",
            "PARAM FT-101.SCALE_MAX := 250.0",
            "PARAM FT-102.SCALE_MIN := 0.0",
            "PARAM FT-102.SCALE_MAX := 120.0",
            "PARAM TT-103.SCALE_MIN := 0.0",
            "PARAM TT-103.SCALE_MAX := 150.0",
            "PARAM FFIC-102.RATIO_SP := 0.45",
            "PARAM FIC-101.KP := 1.2",
            "PARAM FIC-101.TI := 8.0",
            "PARAM FIC-102.KP := 1.0",
            "PARAM FIC-102.TI := 10.0",
            "PARAM TIC-103.SP := 55.0",
            "PARAM TIC-103.KP := 2.0",
            "PARAM TIC-103.TI := 30.0",
        ],
        "interlock": [
            "FUNCTION SCRUB-NOT : NOT",
            "FUNCTION ILK-OR : OR(7)",
            "FUNCTION TRIP-TON : TON",
            "PARAM TRIP-TON.PT := T#2s",
            "CONNECT VS-107.OUT -> SCRUB-NOT.IN",
            "CONNECT LT-104.H_ALM -> ILK-OR.IN1",
            "CONNECT LT-104.L_ALM -> ILK-OR.IN2",
            "CONNECT LT-104.HH_ALM -> ILK-OR.IN3",
            "CONNECT LT-104.LL_ALM -> ILK-OR.IN4",
            "CONNECT SCRUB-NOT.OUT -> ILK-OR.IN5",
            "CONNECT TT-103.H_ALM -> ILK-OR.IN6",
            "CONNECT VS-107.ALM -> ILK-OR.IN7",
            "CONNECT ILK-OR.OUT -> TRIP-TON.IN",
            "CONNECT TRIP-TON.Q -> ILK_TRIP",
            "CONNECT TRIP-TON.Q -> FFIC-102.INHIBIT",
            "CONNECT TRIP-TON.Q -> FIC-101.INHIBIT",
            "CONNECT TRIP-TON.Q -> FIC-102.INHIBIT",
            "CONNECT TRIP-TON.Q -> FV-101.INTERLOCK",
            "CONNECT TRIP-TON.Q -> FV-102.INTERLOCK",
        ],
        "alarm": [
            "PARAM LT-104.H_LIM := 90.0",
            "PARAM LT-104.L_LIM := 20.0",
            "PARAM LT-104.HH_LIM := 95.0",
            "PARAM LT-104.LL_LIM := 5.0",
            "PARAM FT-101.H_LIM := 240.0",
            "PARAM FT-102.H_LIM := 110.0",
            "PARAM TT-103.H_LIM := 95.0",
            "CONNECT LT-104.H_ALM -> LEVEL_HI_ALM",
            "CONNECT LT-104.L_ALM -> LEVEL_LO_ALM",
        ],
    },
    sec(3, "solution-ph-polishing"): {
        "blocks": ["ANALOG_IN", "PID_BASIC", "VALVE_ELECTRIC"],
        "strategy": [("pid", 0.91, "single measurement, single controller, single valve"),
                     ("on_off", 0.05, "dosing is modulating, not two-state")],
        "decl": [
            "VAR_INPUT RAW_AT301 : REAL",
            "VAR_OUTPUT PH_HI_ALM : BOOL",
            "VAR_OUTPUT PH_LO_ALM : BOOL",
            "BLOCK AT-301 : ANALOG_IN",
            "BLOCK AIC-301 : PID_BASIC",
            "BLOCK FV-301 : VALVE_ELECTRIC",
        ],
        "main": [
            "CONNECT RAW_AT301 -> AT-301.IN",
            "CONNECT AT-301.PV -> AIC-301.PV",
            "CONNECT AIC-301.OUT -> FV-301.CMD",
        ],
        "params": [
            "PARAM AT-301.SCALE_MIN := 0.0",
            "PARAM AT-301.SCALE_MAX := 14.0",
            "PARAM AIC-301.SP := 7.2",
            "PARAM AIC-301.KP := 0.8",
            "PARAM AIC-301.TI := 20.0",
        ],
        "interlock": [],
        "alarm": [
            "PARAM AT-301.H_LIM := 9.0",
            "PARAM AT-301.L_LIM := 5.5",
            "CONNECT AT-301.H_ALM -> PH_HI_ALM",
            "CONNECT AT-301.L_ALM -> PH_LO_ALM",
        ],
    },
    sec(4, "evaporator-level-control"): {
        "blocks": ["ANALOG_IN", "PID_CASCADE", "PID_BASIC", "VALVE_ELECTRIC"],
        "strategy": [("cascade", 0.92, "level controller computes the flow controller setpoint"),
                     ("pid", 0.06, "two coupled loops, not one")],
        "decl": [
            "VAR_INPUT RAW_LT401 : REAL",
            "VAR_INPUT RAW_FT402 : REAL",
            "VAR_OUTPUT EVAP_HI_ALM : BOOL",
            "BLOCK LT-401 : ANALOG_IN",
            "BLOCK FT-402 : ANALOG_IN",
            "BLOCK LIC-401 : PID_CASCADE",
            "BLOCK FIC-402 : PID_BASIC",
            "BLOCK FV-402 : VALVE_ELECTRIC",
        ],
        "main": [
            "CONNECT RAW_LT401 -> LT-401.IN",
            "CONNECT RAW_FT402 -> FT-402.IN",
            "CONNECT LT-401.PV -> LIC-401.PV",
            "CONNECT FT-402.PV -> FIC-402.PV",
            "CONNECT LIC-401.SP_OUT -> FIC-402.SP",
            "CONNECT FIC-402.OUT -> FV-402.CMD",
        ],
        "params": [
            "PARAM LT-401.SCALE_MIN := 0.0",
            "PARAM LT-401.SCALE_MAX := 100.0",
            "PARAM FT-402.SCALE_MIN := 0.0",
            "PARAM FT-402.SCALE_MAX := 80.0",
            "PARAM LIC-401.SP := 65.0",
            "PARAM LIC-401.KP := 1.5",
            "PARAM LIC-401.TI := 60.0",
            "PARAM FIC-402.KP := 1.0",
            "PARAM FIC-402.TI := 6.0",
        ],
        "interlock": [],
        "alarm": [
            "PARAM LT-401.H_LIM := 80.0",
            "PARAM FT-402.H_LIM := 75.0",
            "CONNECT LT-401.H_ALM -> EVAP_HI_ALM",
        ],
    },
    sec(5, "steam-header-pressure"): {
        "blocks": ["ANALOG_IN", "PID_BASIC", "SPLIT_RANGE", "VALVE_ELECTRIC"],
        "strategy": [("split_range", 0.9, "one controller output split across letdown and vent valves"),
                     ("pid", 0.07, "the loop is split across two actuators")],
        "decl": [
            "VAR_INPUT RAW_PT501 : REAL",
            "VAR_OUTPUT HDR_HI_ALM : BOOL",
            "BLOCK PT-501 : ANALOG_IN",
            "BLOCK PIC-501 : PID_BASIC",
            "BLOCK PY-501 : SPLIT_RANGE",
            "BLOCK PV-501A : VALVE_ELECTRIC",
            "BLOCK PV-501B : VALVE_ELECTRIC",
        ],
        "main": [
            "CONNECT RAW_PT501 -> PT-501.IN",
            "CONNECT PT-501.PV -> PIC-501.PV",
            "CONNECT PIC-501.OUT -> PY-501.IN",
            "CONNECT PY-501.OUT_A -> PV-501A.CMD",
            "CONNECT PY-501.OUT_B -> PV-501B.CMD",
        ],
        "params": [
            "PARAM PT-501.SCALE_MIN := 0.0",
            "PARAM PT-501.SCALE_MAX := 40.0",
            "PARAM PIC-501.SP := 16.0",
            "PARAM PIC-501.KP := 2.5",
            "PARAM PIC-501.TI := 15.0",
            "PARAM PY-501.SPLIT_POINT := 50.0",
        ],
        "interlock": [],
        "alarm": [
            "PARAM PT-501.H_LIM := 35.0",
            "CONNECT PT-501.H_ALM -> HDR_HI_ALM",
        ],
    },
    sec(6, "granulator-air-temperature"): {
        "blocks": ["ANALOG_IN", "PID_BASIC", "VALVE_ELECTRIC"],
        "strategy": [("pid", 0.88, "air temperature held by a single modulating loop"),
                     ("on_off", 0.08, "the interlock is two-state but the loop is not")],
        "decl": [
            "VAR_INPUT RAW_TT601 : REAL",
            "VAR_OUTPUT GRAN_HI_ALM : BOOL",
            "BLOCK TT-601 : ANALOG_IN",
            "BLOCK TIC-601 : PID_BASIC",
            "BLOCK TV-601 : VALVE_ELECTRIC",
        ],
        "main": [
            "CONNECT RAW_TT601 -> TT-601.IN",
            "CONNECT TT-601.PV -> TIC-601.PV",
            "CONNECT TIC-601.OUT -> TV-601.CMD",
        ],
        "params": [
            "PARAM TT-601.SCALE_MIN := 0.0",
            "PARAM TT-601.SCALE_MAX := 200.0",
            "PARAM TIC-601.SP := 110.0",
            "PARAM TIC-601.KP := 1.8",
            "PARAM TIC-601.TI := 45.0",
        ],
        "interlock": [
            "CONNECT TT-601.HH_ALM -> TV-601.INTERLOCK",
        ],
        "alarm": [
            "PARAM TT-601.H_LIM := 150.0",
            "PARAM TT-601.HH_LIM := 160.0",
            "CONNECT TT-601.H_ALM -> GRAN_HI_ALM",
        ],
    },
    sec(7, "scrubber-make-up-water"): {
        "blocks": ["ANALOG_IN", "PID_BASIC", "RATIO_CONTROL", "VALVE_ELECTRIC"],
        "strategy": [("feedforward", 0.86, "vent gas flow feeds forward into the pH loop"),
                     ("ratio", 0.1, "the gain station resembles a ratio scheme")],
        "decl": [
            "VAR_INPUT RAW_FT701 : REAL",
            "VAR_INPUT RAW_AT702 : REAL",
            "BLOCK FT-701 : ANALOG_IN",
            "BLOCK AT-702 : ANALOG_IN",
            "BLOCK AIC-702 : PID_BASIC",
            "BLOCK FY-701 : RATIO_CONTROL",
            "BLOCK FV-702 : VALVE_ELECTRIC",
        ],
        "main": [
            "FUNCTION FF-ADD : ADD(2)",
            "CONNECT RAW_FT701 -> FT-701.IN",
            "CONNECT RAW_AT702 -> AT-702.IN",
            "CONNECT AT-702.PV -> AIC-702.PV",
            "CONNECT FT-701.PV -> FY-701.PV_WILD",
            "CONNECT AIC-702.OUT -> FF-ADD.IN1",
            "CONNECT FY-701.SP_OUT -> FF-ADD.IN2",
            "CONNECT FF-ADD.OUT -> FV-702.CMD",
        ],
        "params": [
            "PARAM FT-701.SCALE_MIN := 0.0",
            "PARAM FT-701.SCALE_MAX := 500.0",
            "PARAM AT-702.SCALE_MIN := 0.0",
            "PARAM AT-702.SCALE_MAX := 14.0",
            "PARAM AIC-702.SP := 6.5",
            "PARAM AIC-702.KP := 0.6",
            "PARAM AIC-702.TI := 25.0",
            "PARAM FY-701.RATIO_SP := 0.02",
        ],
        "interlock": [],
        "alarm": [],
    },
    sec(8, "cooling-water-pumps"): {
        "blocks": ["DUTY_STANDBY", "PUMP_MOTOR"],
        "strategy": [("duty_standby", 0.95, "an identical pump pair with automatic changeover"),
                     ("on_off", 0.03, "no threshold control is involved")],
        "decl": [
            "VAR_INPUT RUN_DEMAND : BOOL",
            "VAR_OUTPUT DUTY_RUNNING : BOOL",
            "VAR_OUTPUT STANDBY_RUNNING : BOOL",
            "BLOCK XC-801 : DUTY_STANDBY",
            "BLOCK P-801A : PUMP_MOTOR",
            "BLOCK P-801B : PUMP_MOTOR",
        ],
        "main": [
            "CONNECT RUN_DEMAND -> XC-801.DEMAND",
            "CONNECT XC-801.DUTY_CMD -> P-801A.RUN",
            "CONNECT XC-801.STANDBY_CMD -> P-801B.RUN",
            "CONNECT P-801A.RUNNING -> DUTY_RUNNING",
            "CONNECT P-801B.RUNNING -> STANDBY_RUNNING",
        ],
        "params": [
            "PARAM P-801A.CMD := 100.0",
            "PARAM P-801B.CMD := 100.0",
        ],
        "interlock": [
            "CONNECT P-801A.FAULT -> XC-801.DUTY_FAULT",
            "CONNECT P-801B.FAULT -> XC-801.STANDBY_FAULT",
        ],
        "alarm": [],
    },
    sec(9, "product-transfer"): {
        "blocks": ["ANALOG_IN", "PID_BASIC", "PUMP_MOTOR"],
        "strategy": [("pid", 0.84, "tank level held by varying the transfer pump speed"),
                     ("on_off", 0.1, "the pump is speed controlled, not switched")],
        "decl": [
            "VAR_INPUT RAW_LT901 : REAL",
            "VAR_OUTPUT XFER_LO_ALM : BOOL",
            "BLOCK LT-901 : ANALOG_IN",
            "BLOCK LIC-901 : PID_BASIC",
            "BLOCK P-901 : PUMP_MOTOR",
        ],
        "main": [
            "CONNECT RAW_LT901 -> LT-901.IN",
            "CONNECT LT-901.PV -> LIC-901.PV",
            "CONNECT LIC-901.OUT -> P-901.CMD",
            "CONNECT LIC-901.ACTIVE -> P-901.RUN",
        ],
        "params": [
            "PARAM LT-901.SCALE_MIN := 0.0",
            "PARAM LT-901.SCALE_MAX := 100.0",
            "PARAM LIC-901.SP := 40.0",
            "PARAM LIC-901.KP := 1.1",
            "PARAM LIC-901.TI := 12.0",
        ],
        "interlock": [],
        "alarm": [
            "PARAM LT-901.L_LIM := 15.0",
            "CONNECT LT-901.L_ALM -> XFER_LO_ALM",
        ],
    },
    sec(10, "instrument-air-conditioning"): {
        "blocks": ["ANALOG_IN", "DIGITAL_OUT"],
        "strategy": [("on_off", 0.92, "a differential pressure threshold opens the bypass"),
                     ("pid", 0.04, "nothing is modulated")],
        "decl": [
            "VAR_INPUT RAW_PDT1001 : REAL",
            "VAR_OUTPUT BYPASS_OPEN : BOOL",
            "BLOCK PDT-1001 : ANALOG_IN",
            "BLOCK XV-1001 : DIGITAL_OUT",
        ],
        "main": [
            "CONNECT RAW_PDT1001 -> PDT-1001.IN",
            "CONNECT PDT-1001.H_ALM -> XV-1001.IN",
            "CONNECT XV-1001.OUT -> BYPASS_OPEN",
        ],
        "params": [
            "PARAM PDT-1001.SCALE_MIN := 0.0",
            "PARAM PDT-1001.SCALE_MAX := 500.0",
        ],
        "interlock": [],
        "alarm": ["PARAM PDT-1001.H_LIM := 350.0"],
    },
}


def chain_texts(chunk_id: str, spec: dict) -> dict[str, str]:
    """Cumulative pseudo-code per chain step for one section."""
    header = [f"DIAGRAM {chunk_id}"]
    stages = {
        "instantiate": header + spec["decl"],
        "connect": header + spec["decl"] + spec["main"],
        "parametrize": header + spec["decl"] + spec["main"] + spec["params"],
        "interlocks": header + spec["decl"] + spec["main"] + spec["params"] + spec["interlock"],
        "alarms": header
        + spec["decl"]
        + spec["main"]
        + spec["params"]
        + spec["interlock"]
        + spec["alarm"],
    }
    stages["review"] = stages["alarms"]
    return {step: "\n".join(lines) + "\n" for step, lines in stages.items()}


def strategy_json(spec: dict) -> str:
    return json.dumps(
        {
            "candidates": [
                {"strategy": name, "confidence": conf, "rationale": why}
                for name, conf, why in spec["strategy"]
            ]
        },
        indent=2,
    )


def ammonium_script(step_name: str, messages: list[ChatMessage]) -> str:
    chunk_id, _, step = step_name.partition(":")
    spec = SECTIONS[chunk_id]
    if step == "select_blocks":
        return json.dumps(spec["blocks"])
    if step == "select_strategy":
        return strategy_json(spec)
    texts = chain_texts(chunk_id, spec)
    if step in texts:
        return texts[step]
    raise AssertionError(f"unexpected step {step_name}")


def build_ammonium() -> None:
    archive = FIXTURES / "replay" / "ammonium"
    if archive.exists():
        shutil.rmtree(archive)
    library = load_bundled_library()
    client = RecordingClient(ScriptedClient(ammonium_script), archive)
    narrative_path = FIXTURES / "narratives" / "ammonium_nitrate.md"
    narrative = parse_narrative(narrative_path.read_text(encoding="utf-8"))
    plan = make_plan(narrative, "by_section")

    out_dir = FIXTURES / ".build" / "ammonium_out"
    if out_dir.exists():
        shutil.rmtree(out_dir)
    runs = run_pipeline(narrative_path, plan, library, client, out_dir, PipelineConfig(workers=1))
    baseline_dir = FIXTURES / "baselines" / "ammonium"
    if baseline_dir.exists():
        shutil.rmtree(baseline_dir)
    baseline_dir.mkdir(parents=True)
    for run in runs:
        assert run.status == "completed", (run.run_id, run.status, run.error)
        assert run.repair_rounds == 0, run.run_id
        (baseline_dir / f"{run.run_id}.fbdpc").write_text(run.pseudo_code, encoding="utf-8")
        (baseline_dir / f"{run.run_id}.label.json").write_text(
            json.dumps({"strategy": run.decision.selected}) + "\n", encoding="utf-8"
        )
    # The designed section 2 diagram must stay in sync with the committed
    # running-example fixture.
    designed = parse_pseudocode(
        (FIXTURES / "diagrams" / "neutralizer.fbdpc").read_text(encoding="utf-8")
    )
    generated = parse_pseudocode(
        (baseline_dir / "section-2-neutralization-reactor.fbdpc").read_text(encoding="utf-8")
    )
    assert generated.canonical() == designed.canonical(), "section 2 diverged from neutralizer.fbdpc"
    print(f"ammonium archive: {len(list(archive.glob('*.json')))} entries, {len(runs)} runs")


DOSING_FINAL = """DIAGRAM section-1-chlorine-dosing
VAR_INPUT RAW_CL1101 : REAL
BLOCK CL-1101 : ANALOG_IN
BLOCK CIC-1101 : PID_BASIC
BLOCK DV-1101 : VALVE_ELECTRIC
PARAM CIC-1101.SP := 0.8
PARAM CL-1101.SCALE_MAX := 2.0
PARAM CL-1101.H_LIM := 1.5
CONNECT RAW_CL1101 -> CL-1101.IN
CONNECT CL-1101.PV -> CIC-1101.PV
CONNECT CIC-1101.OUT -> DV-1101.CMD
"""

# The connect step wires a BOOL alarm output into the REAL PV input; every
# later step keeps the defect so validation fails after the chain.
DOSING_BROKEN = DOSING_FINAL.replace(
    "CONNECT CL-1101.PV -> CIC-1101.PV", "CONNECT CL-1101.H_ALM -> CIC-1101.PV"
)

DOSING_DECL = "\n".join(DOSING_FINAL.splitlines()[:5]) + "\n"


def dosing_script(fix_on_repair: bool):
    def script(step_name: str, messages: list[ChatMessage]) -> str:
        _, _, step = step_name.partition(":")
        if step == "select_blocks":
            return json.dumps(["ANALOG_IN", "PID_BASIC", "VALVE_ELECTRIC"])
        if step == "select_strategy":
            return json.dumps(
                {"candidates": [{"strategy": "pid", "confidence": 0.9, "rationale": "single loop"}]}
            )
        if step == "instantiate":
            return DOSING_DECL
        if step in ("connect", "parametrize", "interlocks", "alarms", "review"):
            return DOSING_BROKEN
        if step.startswith("validate_repair"):
            return DOSING_FINAL if fix_on_repair else DOSING_BROKEN
        raise AssertionError(f"unexpected step {step_name}")

    return script


def build_dosing() -> None:
    narrative_path = FIXTURES / "narratives" / "dosing_skid.md"
    library = load_bundled_library()
    narrative = parse_narrative(narrative_path.read_text(encoding="utf-8"))
    plan = make_plan(narrative, "by_section")
    for name, fix in (("dosing_ok", True), ("dosing_fail", False)):
        archive = FIXTURES / "replay" / name
        if archive.exists():
            shutil.rmtree(archive)
        client = RecordingClient(ScriptedClient(dosing_script(fix)), archive)
        out_dir = FIXTURES / ".build" / name
        if out_dir.exists():
            shutil.rmtree(out_dir)
        runs = run_pipeline(narrative_path, plan, library, client, out_dir, PipelineConfig(workers=1))
        assert len(runs) == 1
        expected = "completed" if fix else "failed"
        assert runs[0].status == expected, (name, runs[0].status, runs[0].error)
        print(f"{name}: status={runs[0].status} repair_rounds={runs[0].repair_rounds}")


SUMMARY_TEXT = (
    "Neutralizer R-100: ammonia (FT-101, FIC-101, FV-101, operator setpoint, "
    "gain 1.2, Ti 8 s) is the wild stream; nitric acid (FT-102, FIC-102, "
    "FV-102, gain 1.0, Ti 10 s) follows via ratio station FFIC-102 at 0.45. "
    "Level LT-104 permissive band 20-90 %, trips at 95/5 %; temperature "
    "TT-103/TIC-103 holds 55 degC (gain 2.0, Ti 30 s), high alarm 95 degC. "
    "Scrubber VS-107 must run. Trip after 2 s inhibits FFIC-102, FIC-101, "
    "FIC-102 and closes FV-101/FV-102. Alarms: level 90/20 %, ammonia flow "
    "240, acid flow 110. Expose level PV, both level alarms and trip state."
)


def build_summary_archive() -> None:
    archive = FIXTURES / "replay" / "summarize"
    if archive.exists():
        shutil.rmtree(archive)
    client = RecordingClient(ScriptedClient(lambda step, msgs: SUMMARY_TEXT), archive)
    narrative = parse_narrative(
        (FIXTURES / "narratives" / "ammonium_nitrate.md").read_text(encoding="utf-8")
    )
    chunks = extract_chunks(narrative, make_plan(narrative, "by_section"))
    result = summarize_chunk(chunks[1], client)
    assert result.summarized and result.chunk.char_count == len(SUMMARY_TEXT)
    print(f"summarize archive: {result.chunk.char_count} chars")


def build_goldens() -> None:
    from fbdgen.layout import LayoutConfig, layout
    from fbdgen.plcopen import ProjectMeta, emit_plcopen

    golden = FIXTURES / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    library = load_bundled_library()

    pack = context_pack(
        library,
        ["ANALOG_IN", "RATIO_CONTROL", "PID_BASIC", "VALVE_ELECTRIC"],
        get_strategy("ratio"),
        None,
    )
    (golden / "context_pack_ratio.txt").write_text(pack, encoding="utf-8")

    one_block = parse_pseudocode(
        "DIAGRAM single\nBLOCK LT-104 : ANALOG_IN\nPARAM LT-104.H_LIM := 90.0\n"
    )
    xml = emit_plcopen(layout(one_block, library, LayoutConfig()), library, ProjectMeta())
    (golden / "one_block.xml").write_text(xml, encoding="utf-8")

    neutralizer = parse_pseudocode(
        (FIXTURES / "diagrams" / "neutralizer.fbdpc").read_text(encoding="utf-8")
    )
    xml = emit_plcopen(layout(neutralizer, library, LayoutConfig()), library, ProjectMeta())
    (golden / "neutralizer.xml").write_text(xml, encoding="utf-8")
    print("golden files written")


def main() -> None:
    build_ammonium()
    build_dosing()
    build_summary_archive()
    build_goldens()
    build_dir = FIXTURES / ".build"
    if build_dir.exists():
        shutil.rmtree(build_dir)
    print("fixtures rebuilt")


if __name__ == "__main__":
    main()
