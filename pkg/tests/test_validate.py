from __future__ import annotations

import random

from fbdgen.fblibrary import get_strategy, strategy_catalog
from fbdgen.ir import parse_pseudocode, try_parse_pseudocode
from fbdgen.validate import (
    brute_force_strategy_match,
    check_strategy_instantiation,
    stamp_strategy_connections,
    validate_graph,
)

from graphgen import random_graph


def test_fixture_graph_has_zero_errors(neutralizer_graph, library):
    report = validate_graph(neutralizer_graph, library)
    assert report.ok
    assert report.errors() == []
    # deliberate dangles on PID ACTIVE pins surface as warnings only
    assert all(w.code == "DANGLING_OUTPUT" for w in report.warnings())


def test_kind_mismatch_real_into_bool(library):
    text = (
        "DIAGRAM D\n"
        "BLOCK A : ANALOG_IN\n"
        "FUNCTION O : OR(2)\n"
        "CONNECT A.PV -> O.IN1\n"
    )
    report = validate_graph(parse_pseudocode(text), library)
    assert [f.code for f in report.errors()] == ["KIND_MISMATCH"]


def test_param_kind_mismatch(library):
    text = "DIAGRAM D\nBLOCK LT-104 : ANALOG_IN\nPARAM LT-104.H_LIM := TRUE\n"
    report = validate_graph(parse_pseudocode(text), library)
    assert [f.code for f in report.errors()] == ["PARAM_KIND_MISMATCH"]


def test_unknown_type_and_pin(library):
    text = (
        "DIAGRAM D\n"
        "BLOCK A : NO_SUCH\n"
        "BLOCK B : ANALOG_IN\n"
        "PARAM B.NOPE := 1.0\n"
    )
    report = validate_graph(parse_pseudocode(text), library)
    codes = sorted(f.code for f in report.errors())
    assert codes == ["UNKNOWN_PIN", "UNKNOWN_TYPE"]


def test_direction_misuse(library):
    text = (
        "DIAGRAM D\n"
        "BLOCK A : ANALOG_IN\n"
        "BLOCK B : ANALOG_IN\n"
        "CONNECT A.IN -> B.PV\n"  # input used as source, output as target
    )
    report = validate_graph(parse_pseudocode(text), library)
    assert [f.code for f in report.errors()] == ["BAD_DIRECTION", "BAD_DIRECTION"]


def test_param_on_connected_input(library):
    text = (
        "DIAGRAM D\n"
        "VAR_INPUT X : REAL\n"
        "BLOCK A : ANALOG_IN\n"
        "CONNECT X -> A.IN\n"
        "PARAM A.IN := 1.0\n"
    )
    report = validate_graph(parse_pseudocode(text), library)
    assert [f.code for f in report.errors()] == ["PARAM_ON_CONNECTED_INPUT"]


def test_unconnected_required_input_is_warning(library):
    text = "DIAGRAM D\nBLOCK A : PID_BASIC\n"
    report = validate_graph(parse_pseudocode(text), library)
    assert report.ok
    warned = {f.message for f in report.warnings() if f.code == "UNCONNECTED_INPUT"}
    assert any("A.PV" in w for w in warned)
    assert any("A.SP" in w for w in warned)
    assert not any(".KP" in w for w in warned)  # KP has a default


def test_duplicate_input_connection_on_hand_built_graph(library):
    # The parser blocks this; validate must still catch a hand-built graph.
    from fbdgen.ir import BlockInstance, Connection, Endpoint, FbdGraph, VariableDecl, DataKind

    graph = FbdGraph(
        name="d",
        blocks=[BlockInstance("A", "ANALOG_IN")],
        variables=[
            VariableDecl("X", DataKind.REAL, direction="diagram_input"),
            VariableDecl("Y", DataKind.REAL, direction="diagram_input"),
        ],
        connections=[
            Connection(Endpoint("X"), Endpoint("A", "IN")),
            Connection(Endpoint("Y"), Endpoint("A", "IN")),
        ],
    )
    report = validate_graph(graph, library)
    assert [f.code for f in report.errors()] == ["DUPLICATE_INPUT_CONNECTION"]


def test_validate_is_total_on_parser_garbage(library):
    graph, _ = try_parse_pseudocode("DIAGRAM D\nBLOCK A : ANALOG_IN\nCONNECT A.PV -> GHOST.X\n")
    report = validate_graph(graph, library)  # must not raise
    assert isinstance(report.ok, bool)


def test_validation_report_json_shape(library):
    text = "DIAGRAM D\nBLOCK LT-104 : ANALOG_IN\nPARAM LT-104.H_LIM := TRUE\n"
    report = validate_graph(parse_pseudocode(text), library)
    data = report.to_json()
    assert data["findings"][0]["severity"] == "error"
    assert data["findings"][0]["code"] == "PARAM_KIND_MISMATCH"
    assert "line" in data["findings"][0]


def test_ratio_match_on_fixture(neutralizer_graph):
    match = check_strategy_instantiation(neutralizer_graph, get_strategy("ratio"))
    assert match.satisfied
    assert match.role_binding["ratio_controller"] == "FFIC-102"
    assert match.role_binding["wild_controller"] == "FIC-101"
    assert match.role_binding["controlled_controller"] == "FIC-102"
    assert match.missing_connections == []


def test_ratio_match_missing_edge(neutralizer_graph):
    graph = neutralizer_graph
    graph.connections = [
        c
        for c in graph.connections
        if not (str(c.source) == "FFIC-102.SP_OUT" and str(c.target) == "FIC-102.SP")
    ]
    match = check_strategy_instantiation(graph, get_strategy("ratio"))
    assert not match.satisfied
    assert match.missing_connections == ["ratio_controller.SP_OUT -> controlled_controller.SP"]


def test_empty_graph_leaves_roles_unbound(library):
    graph = parse_pseudocode("DIAGRAM D\n")
    match = check_strategy_instantiation(graph, get_strategy("pid"))
    assert not match.satisfied
    assert match.role_binding == {}
    assert len(match.missing_connections) == len(get_strategy("pid").template_connections)


def test_extra_role_candidates_reported(neutralizer_graph):
    match = check_strategy_instantiation(neutralizer_graph, get_strategy("ratio"))
    # TIC-103 is a PID_BASIC not bound to either controller role
    assert ("wild_controller", "TIC-103") in match.extra_role_candidates


def test_stamp_strategy_marks_template_edges(neutralizer_graph):
    stamp_strategy_connections(neutralizer_graph, get_strategy("ratio"))
    flagged = {(str(c.source), str(c.target)) for c in neutralizer_graph.connections if c.is_strategy}
    assert flagged == {
        ("FT-101.PV", "FIC-101.PV"),
        ("FT-101.PV", "FFIC-102.PV_WILD"),
        ("FT-102.PV", "FIC-102.PV"),
        ("FFIC-102.SP_OUT", "FIC-102.SP"),
    }


def test_backtracking_equals_brute_force_on_random_graphs(library):
    rng = random.Random(7)
    for _ in range(40):
        graph = random_graph(
            rng,
            library,
            n_blocks=rng.randint(0, 9),
            n_functions=rng.randint(0, 2),
            n_vars=rng.randint(0, 4),
            max_connections=rng.randint(0, 18),
        )
        for pattern in strategy_catalog():
            fast = check_strategy_instantiation(graph, pattern)
            slow = brute_force_strategy_match(graph, pattern)
            assert fast.satisfied == slow.satisfied
            assert fast.role_binding == slow.role_binding
            assert fast.missing_connections == slow.missing_connections
