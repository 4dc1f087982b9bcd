"""Deterministic well-formedness and type checking of a diagram against a
library, plus structural matching of strategy composition patterns."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .fblibrary import Library, StrategyPattern
from .ir import (
    DataKind,
    Endpoint,
    FbdGraph,
    function_pins,
    is_identifier,
)


@dataclass(frozen=True)
class Finding:
    severity: str  # error | warning
    code: str
    message: str
    line: Optional[int] = None

    def to_json(self) -> dict:
        data = {"severity": self.severity, "code": self.code, "message": self.message}
        if self.line is not None:
            data["line"] = self.line
        return data


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors()

    def to_json(self) -> dict:
        return {"findings": [f.to_json() for f in self.findings]}


def _endpoint_kind(graph: FbdGraph, library: Library, ep: Endpoint, side: str) -> tuple[Optional[DataKind], Optional[str]]:
    """Resolve an endpoint to a data kind; side is 'source' or 'target'.

    Returns (kind, problem). kind is None when the endpoint does not resolve;
    problem carries the reason unless an earlier check already reported it.
    """
    want_dir = "output" if side == "source" else "input"
    block = graph.find_block(ep.owner)
    if block is not None:
        bt = library.get(block.type_name)
        if bt is None:
            return None, None  # unknown type reported separately
        pin = bt.pin(ep.pin or "")
        if pin is None:
            return None, f"block '{ep.owner}' ({block.type_name}) has no pin '{ep.pin}'"
        if pin.direction != want_dir:
            return None, f"pin {ep} is an {pin.direction}, but is used as a {side}"
        return pin.kind, None
    func = graph.find_function(ep.owner)
    if func is not None:
        inputs, outputs = function_pins(func.function, func.arity)
        pins = dict(inputs) if want_dir == "input" else dict(outputs)
        other = dict(outputs) if want_dir == "input" else dict(inputs)
        if ep.pin in pins:
            return pins[ep.pin], None
        if ep.pin in other:
            direction = "output" if want_dir == "input" else "input"
            return None, f"pin {ep} is an {direction}, but is used as a {side}"
        return None, f"function '{ep.owner}' ({func.function}) has no pin '{ep.pin}'"
    var = graph.find_variable(ep.owner)
    if var is not None:
        return var.kind, None
    return None, None  # undefined owner is a parser-level defect


def validate_graph(graph: FbdGraph, library: Library) -> ValidationReport:
    """Run every deterministic check; findings are data, never exceptions.

    Checks: type resolution, pin existence and direction, exact kind match on
    connections, parameter literal kinds, parameters colliding with
    connections, unconnected defaultless inputs and dangling control outputs
    (warnings), identifier legality.
    """
    findings: list[Finding] = []

    def error(code: str, message: str, line: Optional[int] = None) -> None:
        findings.append(Finding("error", code, message, line))

    def warning(code: str, message: str, line: Optional[int] = None) -> None:
        findings.append(Finding("warning", code, message, line))

    for name in sorted(graph.instance_names()):
        if not is_identifier(name):
            error("BAD_IDENTIFIER", f"'{name}' contains disallowed characters")

    for block in graph.blocks:
        if library.get(block.type_name) is None:
            error("UNKNOWN_TYPE", f"block '{block.name}' has unknown type '{block.type_name}'", block.line)

    connected_targets: set[Endpoint] = set()
    for conn in graph.connections:
        if conn.target in connected_targets:
            error(
                "DUPLICATE_INPUT_CONNECTION",
                f"input {conn.target} is driven by more than one connection",
                conn.line,
            )
        src_kind, src_problem = _endpoint_kind(graph, library, conn.source, "source")
        dst_kind, dst_problem = _endpoint_kind(graph, library, conn.target, "target")
        for problem in (src_problem, dst_problem):
            if problem:
                code = "BAD_DIRECTION" if "used as a" in problem else "UNKNOWN_PIN"
                error(code, problem, conn.line)
        if src_kind is not None and dst_kind is not None and src_kind is not dst_kind:
            error(
                "KIND_MISMATCH",
                f"connection {conn.source} -> {conn.target}: "
                f"{src_kind.value} does not match {dst_kind.value}",
                conn.line,
            )
        connected_targets.add(conn.target)

    seen_params: set[Endpoint] = set()
    for param in graph.parameters:
        ep = param.endpoint
        if ep in seen_params:
            error("DUPLICATE_PARAM", f"parameter {ep} set more than once", param.line)
            continue
        seen_params.add(ep)
        kind, problem = _endpoint_kind(graph, library, ep, "target")
        if problem:
            code = "BAD_DIRECTION" if "used as a" in problem else "UNKNOWN_PIN"
            error(code, problem, param.line)
            continue
        if kind is not None and param.value.kind is not kind:
            error(
                "PARAM_KIND_MISMATCH",
                f"parameter {ep} := {param.value.text}: literal is "
                f"{param.value.kind.value}, pin is {kind.value}",
                param.line,
            )
        if ep in connected_targets:
            error("PARAM_ON_CONNECTED_INPUT", f"parameter {ep} collides with a connection", param.line)

    # Completeness warnings: inputs with neither wire, parameter nor default,
    # and control outputs driving nothing.
    for block in sorted(graph.blocks, key=lambda b: b.name):
        bt = library.get(block.type_name)
        if bt is None:
            continue
        for pin in bt.inputs():
            ep = Endpoint(block.name, pin.name)
            if ep not in connected_targets and ep not in seen_params and pin.default is None:
                warning("UNCONNECTED_INPUT", f"required input {ep} is not connected or parametrized")
        if bt.category == "control":
            driven = {c.source for c in graph.connections}
            for pin in bt.outputs():
                ep = Endpoint(block.name, pin.name)
                if ep not in driven:
                    warning("DANGLING_OUTPUT", f"control output {ep} drives nothing")

    return ValidationReport(findings)


@dataclass
class StrategyMatch:
    pattern: str
    satisfied: bool
    role_binding: dict[str, str]
    missing_connections: list[str]
    extra_role_candidates: list[tuple[str, str]]

    def to_json(self) -> dict:
        return {
            "pattern": self.pattern,
            "satisfied": self.satisfied,
            "role_binding": dict(self.role_binding),
            "missing_connections": list(self.missing_connections),
            "extra_role_candidates": [list(pair) for pair in self.extra_role_candidates],
        }


def _role_candidates(graph: FbdGraph, pattern: StrategyPattern) -> dict[str, list[str]]:
    by_type: dict[str, list[str]] = {}
    for block in graph.blocks:
        by_type.setdefault(block.type_name, []).append(block.name)
    candidates = {}
    for role, allowed in pattern.roles:
        names: list[str] = []
        for tn in allowed:
            names.extend(by_type.get(tn, []))
        candidates[role] = sorted(names)
    return candidates


def _missing_edges(graph: FbdGraph, pattern: StrategyPattern, binding: dict[str, str]) -> list[str]:
    missing = []
    for tc in pattern.template_connections:
        src = Endpoint(binding[tc.source_role], tc.source_pin)
        dst = Endpoint(binding[tc.target_role], tc.target_pin)
        if not graph.has_connection(src, dst):
            missing.append(str(tc))
    return missing


def enumerate_role_assignments(graph: FbdGraph, pattern: StrategyPattern):
    """Yield every injective role assignment in lexicographic order (roles in
    pattern order, candidate instances in name order). Brute-force oracle."""
    roles = pattern.role_names()
    candidates = _role_candidates(graph, pattern)

    def recurse(i: int, binding: dict[str, str], used: set[str]):
        if i == len(roles):
            yield dict(binding)
            return
        role = roles[i]
        for name in candidates[role]:
            if name in used:
                continue
            binding[role] = name
            used.add(name)
            yield from recurse(i + 1, binding, used)
            used.discard(name)
            del binding[role]

    yield from recurse(0, {}, set())


def brute_force_strategy_match(graph: FbdGraph, pattern: StrategyPattern) -> StrategyMatch:
    """Exhaustive reference matcher: first assignment with the fewest missing
    template connections, in enumeration order."""
    best_binding: Optional[dict[str, str]] = None
    best_missing: Optional[list[str]] = None
    for binding in enumerate_role_assignments(graph, pattern):
        missing = _missing_edges(graph, pattern, binding)
        if best_missing is None or len(missing) < len(best_missing):
            best_binding, best_missing = binding, missing
            if not missing:
                break
    return _finish_match(graph, pattern, best_binding, best_missing)


def check_strategy_instantiation(graph: FbdGraph, pattern: StrategyPattern) -> StrategyMatch:
    """Find an injective role-to-instance assignment realizing the pattern.

    Backtracking over role candidates, pruning branches that can no longer
    beat the best complete assignment found so far. Diagrams are small, so
    the search is exhaustive in practice; the pruning only skips assignments
    that are strictly worse, keeping the result identical to brute force.
    """
    roles = pattern.role_names()
    candidates = _role_candidates(graph, pattern)
    edges_by_prefix: list[list] = []
    for i in range(len(roles)):
        known = set(roles[: i + 1])
        edges_by_prefix.append(
            [tc for tc in pattern.template_connections
             if tc.source_role in known and tc.target_role in known
             and (tc.source_role == roles[i] or tc.target_role == roles[i])]
        )

    best: dict = {"binding": None, "missing": None}

    def recurse(i: int, binding: dict[str, str], used: set[str], missing_so_far: int):
        if best["missing"] is not None and missing_so_far > len(best["missing"]):
            return
        if i == len(roles):
            missing = _missing_edges(graph, pattern, binding)
            if best["missing"] is None or len(missing) < len(best["missing"]):
                best["binding"], best["missing"] = dict(binding), missing
            return
        role = roles[i]
        for name in candidates[role]:
            if name in used:
                continue
            binding[role] = name
            used.add(name)
            newly_missing = 0
            for tc in edges_by_prefix[i]:
                src = Endpoint(binding[tc.source_role], tc.source_pin)
                dst = Endpoint(binding[tc.target_role], tc.target_pin)
                if not graph.has_connection(src, dst):
                    newly_missing += 1
            recurse(i + 1, binding, used, missing_so_far + newly_missing)
            used.discard(name)
            del binding[role]
            if best["missing"] is not None and not best["missing"]:
                return

    recurse(0, {}, set(), 0)
    return _finish_match(graph, pattern, best["binding"], best["missing"])


def _finish_match(graph, pattern, binding, missing) -> StrategyMatch:
    if binding is None:
        # No injective assignment exists at all (missing instances).
        return StrategyMatch(
            pattern=pattern.name,
            satisfied=False,
            role_binding={},
            missing_connections=[str(tc) for tc in pattern.template_connections],
            extra_role_candidates=[],
        )
    candidates = _role_candidates(graph, pattern)
    extra = []
    for role in pattern.role_names():
        for name in candidates[role]:
            if name != binding[role]:
                extra.append((role, name))
    return StrategyMatch(
        pattern=pattern.name,
        satisfied=not missing,
        role_binding=binding,
        missing_connections=list(missing),
        extra_role_candidates=extra,
    )


def stamp_strategy_connections(graph: FbdGraph, pattern: StrategyPattern) -> StrategyMatch:
    """Match the pattern and flag the realized template connections."""
    match = check_strategy_instantiation(graph, pattern)
    if match.role_binding:
        template = set()
        for tc in pattern.template_connections:
            src = Endpoint(match.role_binding[tc.source_role], tc.source_pin)
            dst = Endpoint(match.role_binding[tc.target_role], tc.target_pin)
            template.add((src, dst))
        for conn in graph.connections:
            if (conn.source, conn.target) in template:
                conn.is_strategy = True
    return match
