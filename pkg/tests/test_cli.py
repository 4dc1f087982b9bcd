from __future__ import annotations

import json

import pytest

from fbdgen.cli import main


def test_plan_prints_json(capsys, ammonium_path):
    status = main(["plan", "--narrative", str(ammonium_path)])
    assert status == 0
    data = json.loads(capsys.readouterr().out)
    assert data["strategy"] == "by_section"
    assert len(data["selections"]) == 10


def test_extract_writes_chunks(tmp_path, ammonium_path, capsys):
    status = main(["extract", "--narrative", str(ammonium_path), "--out", str(tmp_path)])
    assert status == 0
    files = sorted(tmp_path.glob("*.json"))
    assert len(files) == 10
    chunk = json.loads((tmp_path / "section-2-neutralization-reactor.json").read_text())
    assert chunk["char_count"] == 3826


def test_generate_replay_batch(tmp_path, ammonium_path, ammonium_archive, capsys):
    status = main(
        [
            "generate",
            "--llm",
            f"replay:{ammonium_archive}",
            "--narrative",
            str(ammonium_path),
            "--out",
            str(tmp_path),
        ]
    )
    output = capsys.readouterr().out
    assert status == 0
    assert "10/10 chunks completed" in output
    assert (tmp_path / "section-2-neutralization-reactor" / "diagram.xml").exists()


def test_generate_zero_section_narrative_fails_nonzero(tmp_path, ammonium_archive, capsys):
    empty = tmp_path / "empty.md"
    empty.write_text("# Title, sections missing\n\njust prose\n")
    status = main(
        [
            "generate",
            "--llm",
            f"replay:{ammonium_archive}",
            "--narrative",
            str(empty),
            "--out",
            str(tmp_path / "out"),
        ]
    )
    assert status != 0
    assert not list((tmp_path / "out").glob("*")) if (tmp_path / "out").exists() else True


def test_eval_reports_token_cost(tmp_path, ammonium_path, ammonium_archive, fixtures_dir, capsys):
    out = tmp_path / "out"
    main(
        [
            "generate",
            "--llm",
            f"replay:{ammonium_archive}",
            "--narrative",
            str(ammonium_path),
            "--out",
            str(out),
        ]
    )
    capsys.readouterr()
    main(
        [
            "eval",
            "--baseline",
            str(fixtures_dir / "baselines" / "ammonium"),
            "--candidate",
            str(out),
            "--report",
            str(tmp_path / "r"),
        ]
    )
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["estimated_cost_usd"] > 0  # replayed token counts roll up


def test_generate_missing_narrative_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--out", "/tmp/x"])
    assert exc.value.code == 2


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_file_returns_2(tmp_path):
    assert main(["plan", "--narrative", str(tmp_path / "ghost.md")]) == 2


def test_layout_emit_render_from_fbdpc(tmp_path, fixtures_dir):
    source = str(fixtures_dir / "diagrams" / "neutralizer.fbdpc")
    layout_out = tmp_path / "d.json"
    assert main(["layout", "--in", source, "--out", str(layout_out)]) == 0
    data = json.loads(layout_out.read_text())
    assert len(data["nodes"]) == 25
    assert len(data["edges"]) == 32

    xml_out = tmp_path / "d.xml"
    assert main(["emit", "--in", source, "--out", str(xml_out)]) == 0
    golden = (fixtures_dir / "golden" / "neutralizer.xml").read_text()
    assert xml_out.read_text() == golden

    svg_out = tmp_path / "d.svg"
    assert main(["render", "--in", source, "--out", str(svg_out)]) == 0
    assert svg_out.read_text().startswith("<svg")


def test_eval_subcommand(tmp_path, ammonium_path, ammonium_archive, fixtures_dir, capsys):
    out = tmp_path / "out"
    main(
        [
            "generate",
            "--llm",
            f"replay:{ammonium_archive}",
            "--narrative",
            str(ammonium_path),
            "--out",
            str(out),
        ]
    )
    capsys.readouterr()
    status = main(
        [
            "eval",
            "--baseline",
            str(fixtures_dir / "baselines" / "ammonium"),
            "--candidate",
            str(out),
            "--report",
            str(tmp_path / "report"),
        ]
    )
    printed = capsys.readouterr().out
    assert status == 0
    assert "**100.0%**" in printed
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.md").exists()


def test_eval_flags_unwaived_discrepancies(tmp_path, ammonium_path, ammonium_archive, fixtures_dir, capsys):
    out = tmp_path / "out"
    main(
        [
            "generate",
            "--llm",
            f"replay:{ammonium_archive}",
            "--narrative",
            str(ammonium_path),
            "--out",
            str(out),
        ]
    )
    # corrupt one alarm parameter in one candidate
    target = out / "section-1-ammonia-feed-storage" / "diagram.fbdpc"
    target.write_text(target.read_text().replace("H_LIM := 92.0", "H_LIM := 10.0"))
    capsys.readouterr()
    status = main(
        ["eval", "--baseline", str(fixtures_dir / "baselines" / "ammonium"), "--candidate", str(out)]
    )
    printed = capsys.readouterr().out
    assert status == 1
    assert "DISCREPANCY" in printed

    waivers = tmp_path / "waivers.json"
    waivers.write_text(
        json.dumps(
            [
                {
                    "section_id": "section-1-ammonia-feed-storage",
                    "discrepancy_key": "alarm:LT201.H_LIM",
                    "justification": "site standard allows the lower limit",
                }
            ]
        )
    )
    status = main(
        [
            "eval",
            "--baseline",
            str(fixtures_dir / "baselines" / "ammonium"),
            "--candidate",
            str(out),
            "--waivers",
            str(waivers),
        ]
    )
    assert status == 0
