"""FBD pseudo-code notation: the in-memory dataflow graph, its line-oriented
text form, a diagnostics-collecting parser and a canonical serializer.

The notation is deliberately small. One statement per line, `#` comments:

    DIAGRAM neutralizer
    VAR_INPUT RAW_LT104 : REAL
    VAR_OUTPUT LEVEL_HI_ALM : BOOL
    BLOCK LT-104 : ANALOG_IN
    FUNCTION ILK-OR : OR(3)
    PARAM LT-104.H_LIM := 90.0
    CONNECT RAW_LT104 -> LT-104.IN
    CONNECT LT-104.H_ALM -> ILK-OR.IN1

There are no expressions and no coordinates; layout is computed downstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class DataKind(str, Enum):
    BOOL = "BOOL"
    INT = "INT"
    REAL = "REAL"
    TIME = "TIME"
    STRING = "STRING"


IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*\Z")

_BOOL_RE = re.compile(r"(TRUE|FALSE)\Z")
_INT_RE = re.compile(r"-?[0-9]+\Z")
_REAL_RE = re.compile(r"-?[0-9]+\.[0-9]+([eE][+-]?[0-9]+)?\Z")
_TIME_RE = re.compile(r"T#-?([0-9]+(\.[0-9]+)?(d|h|m|s|ms))+\Z", re.IGNORECASE)
_STRING_RE = re.compile(r"'(?:\$.|[^'$])*'\Z")

_TIME_UNIT_MS = {"d": 86_400_000.0, "h": 3_600_000.0, "m": 60_000.0, "s": 1000.0, "ms": 1.0}


def is_identifier(text: str) -> bool:
    return bool(IDENT_RE.match(text))


@dataclass(frozen=True)
class Literal:
    """A typed literal, keeping the exact source lexeme for bit-stable output."""

    kind: DataKind
    text: str

    @property
    def value(self):
        """Python value of the literal (TIME as milliseconds)."""
        if self.kind is DataKind.BOOL:
            return self.text == "TRUE"
        if self.kind is DataKind.INT:
            return int(self.text)
        if self.kind is DataKind.REAL:
            return float(self.text)
        if self.kind is DataKind.TIME:
            return _time_to_ms(self.text)
        return self.text[1:-1].replace("$'", "'").replace("$$", "$")


def _time_to_ms(text: str) -> float:
    body = text[2:]
    sign = 1.0
    if body.startswith("-"):
        sign = -1.0
        body = body[1:]
    total = 0.0
    for num, _, unit in re.findall(r"([0-9]+(\.[0-9]+)?)(d|h|m|s|ms)", body, re.IGNORECASE):
        total += float(num) * _TIME_UNIT_MS[unit.lower()]
    return sign * total


def parse_literal(text: str) -> Literal:
    """Classify a literal lexeme; raises ValueError on anything unrecognized."""
    if _BOOL_RE.match(text):
        return Literal(DataKind.BOOL, text)
    if _TIME_RE.match(text):
        return Literal(DataKind.TIME, text)
    if _REAL_RE.match(text):
        return Literal(DataKind.REAL, text)
    if _INT_RE.match(text):
        return Literal(DataKind.INT, text)
    if _STRING_RE.match(text):
        return Literal(DataKind.STRING, text)
    raise ValueError(f"not a literal: {text!r}")


# Standard IEC functions available to diagrams, independent of any library.
# Entries are (fixed_arity or None for extensible, input kind, output pins).
# Extensible functions take inputs IN1..INn; arity defaults to 2.
_EXTENSIBLE_BOOL = ("AND", "OR", "XOR")
_EXTENSIBLE_REAL = ("ADD", "MUL")

FUNCTION_SIGNATURES: dict[str, dict] = {}


def _fn(name, inputs, outputs, extensible=False):
    FUNCTION_SIGNATURES[name] = {
        "inputs": inputs,
        "outputs": outputs,
        "extensible": extensible,
    }


for _name in _EXTENSIBLE_BOOL:
    _fn(_name, [("IN", DataKind.BOOL)], [("OUT", DataKind.BOOL)], extensible=True)
for _name in _EXTENSIBLE_REAL:
    _fn(_name, [("IN", DataKind.REAL)], [("OUT", DataKind.REAL)], extensible=True)
_fn("NOT", [("IN", DataKind.BOOL)], [("OUT", DataKind.BOOL)])
_fn("SUB", [("IN1", DataKind.REAL), ("IN2", DataKind.REAL)], [("OUT", DataKind.REAL)])
_fn("DIV", [("IN1", DataKind.REAL), ("IN2", DataKind.REAL)], [("OUT", DataKind.REAL)])
for _name in ("GT", "GE", "LT", "LE", "EQ"):
    _fn(_name, [("IN1", DataKind.REAL), ("IN2", DataKind.REAL)], [("OUT", DataKind.BOOL)])
_fn("SEL", [("G", DataKind.BOOL), ("IN0", DataKind.REAL), ("IN1", DataKind.REAL)], [("OUT", DataKind.REAL)])
_fn("MOVE", [("IN", DataKind.REAL)], [("OUT", DataKind.REAL)])
_fn("TON", [("IN", DataKind.BOOL), ("PT", DataKind.TIME)], [("Q", DataKind.BOOL), ("ET", DataKind.TIME)])
_fn("TOF", [("IN", DataKind.BOOL), ("PT", DataKind.TIME)], [("Q", DataKind.BOOL), ("ET", DataKind.TIME)])

STANDARD_FUNCTIONS = tuple(sorted(FUNCTION_SIGNATURES))


def function_pins(function: str, arity: int) -> tuple[list[tuple[str, DataKind]], list[tuple[str, DataKind]]]:
    """Input and output pin lists of a standard function at a given arity."""
    sig = FUNCTION_SIGNATURES[function]
    if sig["extensible"]:
        base, kind = sig["inputs"][0]
        inputs = [(f"{base}{i}", kind) for i in range(1, arity + 1)]
    else:
        inputs = list(sig["inputs"])
    return inputs, list(sig["outputs"])


def function_default_arity(function: str) -> int:
    sig = FUNCTION_SIGNATURES[function]
    return 2 if sig["extensible"] else len(sig["inputs"])


@dataclass(frozen=True)
class Endpoint:
    """One side of a connection: a pin on an instance, or a bare variable."""

    owner: str
    pin: Optional[str] = None

    def __str__(self) -> str:
        return self.owner if self.pin is None else f"{self.owner}.{self.pin}"


@dataclass
class BlockInstance:
    name: str
    type_name: str
    line: Optional[int] = field(default=None, compare=False)


@dataclass
class FunctionInstance:
    name: str
    function: str
    arity: int
    line: Optional[int] = field(default=None, compare=False)


@dataclass
class VariableDecl:
    name: str
    kind: DataKind
    initial: Optional[Literal] = None
    direction: str = "internal"  # internal | diagram_input | diagram_output
    line: Optional[int] = field(default=None, compare=False)


@dataclass
class Connection:
    source: Endpoint
    target: Endpoint
    is_strategy: bool = field(default=False, compare=False)
    line: Optional[int] = field(default=None, compare=False)


@dataclass
class ParameterSetting:
    endpoint: Endpoint
    value: Literal
    line: Optional[int] = field(default=None, compare=False)


@dataclass
class FbdGraph:
    """A function block diagram: instances, variables, wiring, parameters."""

    name: str
    blocks: list[BlockInstance] = field(default_factory=list)
    functions: list[FunctionInstance] = field(default_factory=list)
    variables: list[VariableDecl] = field(default_factory=list)
    connections: list[Connection] = field(default_factory=list)
    parameters: list[ParameterSetting] = field(default_factory=list)

    def instance_names(self) -> set[str]:
        names = {b.name for b in self.blocks}
        names.update(f.name for f in self.functions)
        names.update(v.name for v in self.variables)
        return names

    def find_variable(self, name: str) -> Optional[VariableDecl]:
        for v in self.variables:
            if v.name == name:
                return v
        return None

    def find_block(self, name: str) -> Optional[BlockInstance]:
        for b in self.blocks:
            if b.name == name:
                return b
        return None

    def find_function(self, name: str) -> Optional[FunctionInstance]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def has_connection(self, source: Endpoint, target: Endpoint) -> bool:
        return any(c.source == source and c.target == target for c in self.connections)

    def canonical(self) -> "FbdGraph":
        """Copy with all element lists in canonical (lexicographic) order."""
        return FbdGraph(
            name=self.name,
            blocks=sorted(self.blocks, key=lambda b: b.name),
            functions=sorted(self.functions, key=lambda f: f.name),
            variables=sorted(self.variables, key=lambda v: v.name),
            connections=sorted(
                self.connections,
                key=lambda c: (c.source.owner, c.source.pin or "", c.target.owner, c.target.pin or ""),
            ),
            parameters=sorted(self.parameters, key=lambda p: (p.endpoint.owner, p.endpoint.pin or "")),
        )


def element_counts(graph: FbdGraph) -> tuple[int, int, int, int, int]:
    """(blocks, functions, variables, connections, parameters)."""
    return (
        len(graph.blocks),
        len(graph.functions),
        len(graph.variables),
        len(graph.connections),
        len(graph.parameters),
    )


@dataclass(frozen=True)
class Diagnostic:
    line: int
    code: str  # syntax | duplicate-name | duplicate-input-connection | undefined-instance | bad-endpoint
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.code}: {self.message}"


class PseudocodeError(Exception):
    """Raised by parse_pseudocode with every diagnostic collected."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


def _strip_comment(line: str) -> str:
    """Cut an end-of-line comment: a '#' at line start or after whitespace,
    outside string literals. '#' inside T#2s durations is not a comment."""
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_string:
            if ch == "$":
                i += 2
                continue
            if ch == "'":
                in_string = False
        elif ch == "'":
            in_string = True
        elif ch == "#" and (i == 0 or line[i - 1].isspace()):
            return line[:i]
        i += 1
    return line


_VAR_KEYWORDS = {"VAR": "internal", "VAR_INPUT": "diagram_input", "VAR_OUTPUT": "diagram_output"}

_FUNCTION_DECL_RE = re.compile(r"([A-Z]+)(?:\(([0-9]+)\))?\Z")


def _split_endpoint(text: str) -> Optional[Endpoint]:
    if "." in text:
        owner, _, pin = text.rpartition(".")
        if is_identifier(owner) and is_identifier(pin):
            return Endpoint(owner, pin)
        return None
    if is_identifier(text):
        return Endpoint(text)
    return None


def try_parse_pseudocode(text: str) -> tuple[FbdGraph, list[Diagnostic]]:
    """Parse the notation, collecting all diagnostics instead of failing fast.

    Returns the (possibly partial) graph and the diagnostics list; the graph
    only satisfies the structural invariants when the list is empty.
    """
    diags: list[Diagnostic] = []
    graph = FbdGraph(name="")
    seen_names: dict[str, int] = {}
    connected_inputs: dict[Endpoint, int] = {}

    def err(line: int, code: str, message: str) -> None:
        diags.append(Diagnostic(line, code, message))

    def declare(name: str, line: int) -> bool:
        if name in seen_names:
            err(line, "duplicate-name", f"'{name}' already declared on line {seen_names[name]}")
            return False
        seen_names[name] = line
        return True

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()

        if keyword == "DIAGRAM":
            if not is_identifier(rest):
                err(lineno, "syntax", "expected 'DIAGRAM <identifier>'")
                continue
            if graph.name:
                err(lineno, "syntax", "duplicate DIAGRAM statement")
                continue
            graph.name = rest

        elif keyword in _VAR_KEYWORDS:
            m = re.match(r"([^\s:]+)\s*:\s*([A-Z]+)(?:\s*:=\s*(.+))?\Z", rest)
            if not m or not is_identifier(m.group(1)):
                err(lineno, "syntax", f"expected '{keyword} <identifier> : <KIND> [:= <literal>]'")
                continue
            name, kind_text, init_text = m.group(1), m.group(2), m.group(3)
            try:
                kind = DataKind(kind_text)
            except ValueError:
                err(lineno, "syntax", f"unknown data kind '{kind_text}'")
                continue
            initial = None
            if init_text is not None:
                try:
                    initial = parse_literal(init_text.strip())
                except ValueError:
                    err(lineno, "syntax", f"malformed literal '{init_text.strip()}'")
                    continue
                if initial.kind is not kind:
                    err(lineno, "syntax", f"initial value {initial.text} is not of kind {kind.value}")
                    continue
            if declare(name, lineno):
                graph.variables.append(
                    VariableDecl(name, kind, initial, _VAR_KEYWORDS[keyword], line=lineno)
                )

        elif keyword == "BLOCK":
            m = re.match(r"([^\s:]+)\s*:\s*(\S+)\Z", rest)
            if not m or not is_identifier(m.group(1)) or not is_identifier(m.group(2)):
                err(lineno, "syntax", "expected 'BLOCK <identifier> : <TypeName>'")
                continue
            if declare(m.group(1), lineno):
                graph.blocks.append(BlockInstance(m.group(1), m.group(2), line=lineno))

        elif keyword == "FUNCTION":
            m = re.match(r"([^\s:]+)\s*:\s*(\S+)\Z", rest)
            decl = _FUNCTION_DECL_RE.match(m.group(2)) if m else None
            if not m or not is_identifier(m.group(1)) or not decl:
                err(lineno, "syntax", "expected 'FUNCTION <identifier> : <FUNC>[(<arity>)]'")
                continue
            func, arity_text = decl.group(1), decl.group(2)
            if func not in FUNCTION_SIGNATURES:
                err(lineno, "syntax", f"unknown function '{func}'")
                continue
            sig = FUNCTION_SIGNATURES[func]
            arity = int(arity_text) if arity_text else function_default_arity(func)
            if sig["extensible"] and arity < 2:
                err(lineno, "syntax", f"{func} needs arity >= 2")
                continue
            if not sig["extensible"] and arity != len(sig["inputs"]):
                err(lineno, "syntax", f"{func} has fixed arity {len(sig['inputs'])}")
                continue
            if declare(m.group(1), lineno):
                graph.functions.append(FunctionInstance(m.group(1), func, arity, line=lineno))

        elif keyword == "PARAM":
            m = re.match(r"(\S+)\s*:=\s*(.+)\Z", rest)
            ep = _split_endpoint(m.group(1)) if m else None
            if not m or ep is None or ep.pin is None:
                err(lineno, "syntax", "expected 'PARAM <instance>.<pin> := <literal>'")
                continue
            try:
                value = parse_literal(m.group(2).strip())
            except ValueError:
                err(lineno, "syntax", f"malformed literal '{m.group(2).strip()}'")
                continue
            graph.parameters.append(ParameterSetting(ep, value, line=lineno))

        elif keyword == "CONNECT":
            m = re.match(r"(\S+)\s*->\s*(\S+)\Z", rest)
            src = _split_endpoint(m.group(1)) if m else None
            dst = _split_endpoint(m.group(2)) if m else None
            if not m or src is None or dst is None:
                err(lineno, "syntax", "expected 'CONNECT <endpoint> -> <endpoint>'")
                continue
            if dst in connected_inputs:
                err(
                    lineno,
                    "duplicate-input-connection",
                    f"input {dst} already driven by a connection on line {connected_inputs[dst]}",
                )
                continue
            connected_inputs[dst] = lineno
            graph.connections.append(Connection(src, dst, line=lineno))

        else:
            err(lineno, "syntax", f"unknown statement '{keyword}'")

    if not graph.name:
        diags.insert(0, Diagnostic(1, "syntax", "missing DIAGRAM statement"))

    # Endpoint shape and resolution are checked once every declaration is in.
    blockish = {b.name for b in graph.blocks} | {f.name for f in graph.functions}
    varnames = {v.name for v in graph.variables}

    def check_endpoint(ep: Endpoint, line: Optional[int]) -> None:
        at = line or 0
        if ep.owner in blockish:
            if ep.pin is None:
                err(at, "bad-endpoint", f"'{ep.owner}' is an instance; a pin is required")
        elif ep.owner in varnames:
            if ep.pin is not None:
                err(at, "bad-endpoint", f"'{ep.owner}' is a variable and has no pins")
        else:
            err(at, "undefined-instance", f"'{ep.owner}' is not declared")

    for conn in graph.connections:
        check_endpoint(conn.source, conn.line)
        check_endpoint(conn.target, conn.line)
    for param in graph.parameters:
        check_endpoint(param.endpoint, param.line)

    diags.sort(key=lambda d: (d.line, d.code, d.message))
    return graph, diags


def parse_pseudocode(text: str) -> FbdGraph:
    """Parse pseudo-code text into a graph; raises PseudocodeError listing
    every collected diagnostic when the text is not structurally valid."""
    graph, diags = try_parse_pseudocode(text)
    if diags:
        raise PseudocodeError(diags)
    return graph


def serialize_pseudocode(graph: FbdGraph) -> str:
    """Canonical text form: declarations before wiring, each class of
    statement sorted, so equal graphs serialize byte-identically."""
    g = graph.canonical()
    lines = [f"DIAGRAM {g.name}"]
    keyword_for = {"internal": "VAR", "diagram_input": "VAR_INPUT", "diagram_output": "VAR_OUTPUT"}
    for v in g.variables:
        suffix = f" := {v.initial.text}" if v.initial is not None else ""
        lines.append(f"{keyword_for[v.direction]} {v.name} : {v.kind.value}{suffix}")
    for b in g.blocks:
        lines.append(f"BLOCK {b.name} : {b.type_name}")
    for f in g.functions:
        arity = "" if not FUNCTION_SIGNATURES[f.function]["extensible"] else f"({f.arity})"
        lines.append(f"FUNCTION {f.name} : {f.function}{arity}")
    for p in g.parameters:
        lines.append(f"PARAM {p.endpoint} := {p.value.text}")
    for c in g.connections:
        lines.append(f"CONNECT {c.source} -> {c.target}")
    return "\n".join(lines) + "\n"
