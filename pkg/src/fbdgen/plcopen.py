"""PLCopen TC6 XML emission (OpenPLC dialect) and the inverse reader.

The emitted project is self-contained: one program POU holding the diagram's
FBD body plus one interface-only functionBlock POU per used library type, so
the target IDE can instantiate everything. Only the dialect subset needed
for FBD programs is produced or accepted; anything else is rejected rather
than silently dropped.

Dialect choices: parameters are wired literal `inVariable` feeders, standard
IEC functions are emitted as named blocks, local IDs follow canonical
element order, and all coordinates are layout grid units scaled by 10.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Optional

from .fblibrary import Library
from .ir import (
    BlockInstance,
    Connection,
    DataKind,
    Endpoint,
    FbdGraph,
    FunctionInstance,
    Literal,
    ParameterSetting,
    STANDARD_FUNCTIONS,
    VariableDecl,
    function_pins,
    parse_literal,
)
from .layout import GRID_UNIT_PX, LayoutedDiagram, NodeBox

TC6_NS = "http://www.plcopen.org/xml/tc6_0201"

_KIND_TAG = {
    DataKind.BOOL: "BOOL",
    DataKind.INT: "INT",
    DataKind.REAL: "REAL",
    DataKind.TIME: "TIME",
    DataKind.STRING: "string",
}
_TAG_KIND = {v: k for k, v in _KIND_TAG.items()}

_FIXED_TIME = "2000-01-01T00:00:00"


class EmitPrecondition(Exception):
    pass


class UnsupportedElement(Exception):
    pass


class BadReference(Exception):
    pass


@dataclass(frozen=True)
class ProjectMeta:
    company: str = "fbdgen"
    product: str = "fbdgen"
    version: str = "0.1.0"
    author: str = "fbdgen"
    created_at: str = _FIXED_TIME  # fixed by default so output is byte-stable


def _px(units: int) -> str:
    return str(units * GRID_UNIT_PX)


def _sub(parent: ET.Element, tag: str, **attrs: str) -> ET.Element:
    el = ET.SubElement(parent, tag)
    for key, value in attrs.items():
        el.set(key, value)
    return el


def _interface_variable(parent: ET.Element, name: str, kind: DataKind, initial: Optional[Literal]) -> None:
    var = _sub(parent, "variable", name=name)
    typ = _sub(var, "type")
    _sub(typ, _KIND_TAG[kind])
    if initial is not None:
        init = _sub(var, "initialValue")
        _sub(init, "simpleValue", value=initial.text)


def _library_pou(parent: ET.Element, library: Library, type_name: str) -> None:
    bt = library.get(type_name)
    pou = _sub(parent, "pou", name=bt.name, pouType="functionBlock")
    interface = _sub(pou, "interface")
    input_vars = _sub(interface, "inputVars")
    for pin in bt.inputs():
        _interface_variable(input_vars, pin.name, pin.kind, pin.default)
    output_vars = _sub(interface, "outputVars")
    for pin in bt.outputs():
        _interface_variable(output_vars, pin.name, pin.kind, None)
    body = _sub(pou, "body")
    _sub(body, "FBD")


def _position(parent: ET.Element, x: int, y: int) -> None:
    _sub(parent, "position", x=_px(x), y=_px(y))


def _rel_position(parent: ET.Element, box: NodeBox, port: tuple[int, int]) -> None:
    _sub(parent, "relPosition", x=_px(port[0] - box.x), y=_px(port[1] - box.y))


def _connection_in(
    parent: ET.Element,
    box: Optional[NodeBox],
    port: Optional[tuple[int, int]],
    source: Optional[tuple[int, Optional[str]]],
) -> None:
    cpi = _sub(parent, "connectionPointIn")
    if box is not None and port is not None:
        _rel_position(cpi, box, port)
    if source is not None:
        ref, formal = source
        conn = _sub(cpi, "connection", refLocalId=str(ref))
        if formal is not None:
            conn.set("formalParameter", formal)


def emit_plcopen(diagram: LayoutedDiagram, library: Library, meta: ProjectMeta = ProjectMeta()) -> str:
    """Serialize a layouted diagram as a PLCopen TC6 project document.

    Raises EmitPrecondition when the graph references library types or pins
    that do not resolve; callers are expected to validate first.
    """
    from .validate import validate_graph  # local import to avoid a cycle

    graph = diagram.graph
    report = validate_graph(graph, library)
    if not report.ok:
        raise EmitPrecondition(
            "; ".join(f.message for f in report.errors())
        )

    # Canonical local id assignment: variables, blocks, functions, feeders.
    local_ids: dict[str, int] = {}
    next_id = 1
    for v in sorted(graph.variables, key=lambda v: v.name):
        local_ids[v.name] = next_id
        next_id += 1
    for b in sorted(graph.blocks, key=lambda b: b.name):
        local_ids[b.name] = next_id
        next_id += 1
    for f in sorted(graph.functions, key=lambda f: f.name):
        local_ids[f.name] = next_id
        next_id += 1
    feeder_ids: dict[tuple[str, str], int] = {}
    for p in sorted(graph.parameters, key=lambda p: (p.endpoint.owner, p.endpoint.pin or "")):
        feeder_ids[(p.endpoint.owner, p.endpoint.pin)] = next_id
        next_id += 1

    driven_by: dict[Endpoint, Endpoint] = {c.target: c.source for c in graph.connections}

    def source_ref(target: Endpoint) -> Optional[tuple[int, Optional[str]]]:
        src = driven_by.get(target)
        if src is not None:
            return local_ids[src.owner], src.pin
        key = (target.owner, target.pin)
        if key in feeder_ids:
            return feeder_ids[key], None
        return None

    root = ET.Element("project")
    root.set("xmlns", TC6_NS)
    _sub(
        root,
        "fileHeader",
        companyName=meta.company,
        productName=meta.product,
        productVersion=meta.version,
        creationDateTime=meta.created_at,
    )
    content = _sub(root, "contentHeader", name=graph.name, author=meta.author, modificationDateTime=meta.created_at)
    coord = _sub(content, "coordinateInfo")
    for notation in ("fbd", "ld", "sfc"):
        scale = _sub(coord, notation)
        _sub(scale, "scaling", x=str(GRID_UNIT_PX), y=str(GRID_UNIT_PX))

    types = _sub(root, "types")
    _sub(types, "dataTypes")
    pous = _sub(types, "pous")

    for type_name in sorted({b.type_name for b in graph.blocks}):
        _library_pou(pous, library, type_name)

    pou = _sub(pous, "pou", name=graph.name, pouType="program")
    interface = _sub(pou, "interface")
    sections = (
        ("localVars", "internal"),
        ("inputVars", "diagram_input"),
        ("outputVars", "diagram_output"),
    )
    for section_tag, direction in sections:
        decls = [v for v in sorted(graph.variables, key=lambda v: v.name) if v.direction == direction]
        if decls:
            section = _sub(interface, section_tag)
            for v in decls:
                _interface_variable(section, v.name, v.kind, v.initial)

    body = _sub(pou, "body")
    fbd = _sub(body, "FBD")

    boxes = {box.instance: box for box in diagram.nodes}

    for v in sorted(graph.variables, key=lambda v: v.name):
        box = boxes[v.name]
        target = Endpoint(v.name)
        src = source_ref(target)
        if v.direction == "diagram_input":
            el = _sub(fbd, "inVariable", localId=str(local_ids[v.name]))
        elif v.direction == "diagram_output":
            el = _sub(fbd, "outVariable", localId=str(local_ids[v.name]))
        else:
            el = _sub(fbd, "inOutVariable", localId=str(local_ids[v.name]))
        el.set("width", _px(box.width))
        el.set("height", _px(box.height))
        _position(el, box.x, box.y)
        if v.direction in ("diagram_output", "internal"):
            _connection_in(el, box, box.input_ports[None], src)
        if v.direction in ("diagram_input", "internal"):
            cpo = _sub(el, "connectionPointOut")
            _rel_position(cpo, box, box.output_ports[None])
        _sub(el, "expression").text = v.name

    def emit_block(name: str, type_name: str, in_pins: list[str], out_pins: list[str]) -> None:
        box = boxes[name]
        el = _sub(
            fbd,
            "block",
            localId=str(local_ids[name]),
            typeName=type_name,
            instanceName=name,
            width=_px(box.width),
            height=_px(box.height),
        )
        _position(el, box.x, box.y)
        inputs = _sub(el, "inputVariables")
        for pin in in_pins:
            var = _sub(inputs, "variable", formalParameter=pin)
            _connection_in(var, box, box.input_ports[pin], source_ref(Endpoint(name, pin)))
        _sub(el, "inOutVariables")
        outputs = _sub(el, "outputVariables")
        for pin in out_pins:
            var = _sub(outputs, "variable", formalParameter=pin)
            cpo = _sub(var, "connectionPointOut")
            _rel_position(cpo, box, box.output_ports[pin])

    for b in sorted(graph.blocks, key=lambda b: b.name):
        bt = library.get(b.type_name)
        emit_block(b.name, b.type_name, [p.name for p in bt.inputs()], [p.name for p in bt.outputs()])
    for f in sorted(graph.functions, key=lambda f: f.name):
        ins, outs = function_pins(f.function, f.arity)
        emit_block(f.name, f.function, [n for n, _ in ins], [n for n, _ in outs])

    for p in sorted(graph.parameters, key=lambda p: (p.endpoint.owner, p.endpoint.pin or "")):
        target_box = boxes[p.endpoint.owner]
        port = target_box.input_ports[p.endpoint.pin]
        width = len(p.value.text) + 2
        el = _sub(
            fbd,
            "inVariable",
            localId=str(feeder_ids[(p.endpoint.owner, p.endpoint.pin)]),
            width=_px(width),
            height=_px(2),
        )
        _position(el, max(0, port[0] - width - 2), port[1] - 1)
        cpo = _sub(el, "connectionPointOut")
        _sub(cpo, "relPosition", x=_px(width), y=_px(1))
        _sub(el, "expression").text = p.value.text

    instances = _sub(root, "instances")
    _sub(instances, "configurations")

    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _children(el: ET.Element) -> list[ET.Element]:
    return list(el)


def read_plcopen(xml_text: str) -> FbdGraph:
    """Recover the dataflow graph from an emitted project document.

    Coordinates are discarded; literal inVariable feeders become parameters.
    Raises UnsupportedElement for anything outside the dialect subset and
    BadReference for dangling or duplicate local ids.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise UnsupportedElement(f"not well-formed XML: {exc}") from None
    if _strip_ns(root.tag) != "project":
        raise UnsupportedElement(f"root element '{_strip_ns(root.tag)}'")

    programs = []
    for pou in root.iter():
        if _strip_ns(pou.tag) == "pou" and pou.get("pouType") == "program":
            programs.append(pou)
    if len(programs) != 1:
        raise UnsupportedElement(f"expected exactly one program POU, found {len(programs)}")
    pou = programs[0]

    graph = FbdGraph(name=pou.get("name", ""))
    var_kinds: dict[str, tuple[DataKind, Optional[Literal]]] = {}

    interface = next((c for c in _children(pou) if _strip_ns(c.tag) == "interface"), None)
    directions = {"localVars": "internal", "inputVars": "diagram_input", "outputVars": "diagram_output"}
    if interface is not None:
        for section in _children(interface):
            section_tag = _strip_ns(section.tag)
            if section_tag not in directions:
                raise UnsupportedElement(f"interface section '{section_tag}'")
            for var in _children(section):
                name = var.get("name", "")
                kind = None
                initial = None
                for child in _children(var):
                    if _strip_ns(child.tag) == "type":
                        type_children = _children(child)
                        tag = _strip_ns(type_children[0].tag) if type_children else ""
                        if tag not in _TAG_KIND:
                            raise UnsupportedElement(f"data type '{tag}'")
                        kind = _TAG_KIND[tag]
                    elif _strip_ns(child.tag) == "initialValue":
                        simple = _children(child)[0]
                        initial = parse_literal(simple.get("value", ""))
                if kind is None:
                    raise UnsupportedElement(f"variable '{name}' without a type")
                graph.variables.append(VariableDecl(name, kind, initial, directions[section_tag]))
                var_kinds[name] = (kind, initial)

    body = next((c for c in _children(pou) if _strip_ns(c.tag) == "body"), None)
    if body is None or not _children(body):
        raise UnsupportedElement("program POU without a body")
    fbd = _children(body)[0]
    if _strip_ns(fbd.tag) != "FBD":
        raise UnsupportedElement(f"body language '{_strip_ns(fbd.tag)}'")

    owner_of_id: dict[int, str] = {}
    feeder_literals: dict[int, Literal] = {}
    pending: list[tuple[int, Optional[str], Endpoint]] = []  # (refLocalId, formalParameter, target)

    def read_connections(container: ET.Element, target: Endpoint) -> None:
        for cpi in container.iter():
            if _strip_ns(cpi.tag) != "connectionPointIn":
                continue
            for conn in _children(cpi):
                if _strip_ns(conn.tag) != "connection":
                    continue
                ref = conn.get("refLocalId")
                if ref is None:
                    raise BadReference(f"connection into {target} without refLocalId")
                pending.append((int(ref), conn.get("formalParameter"), target))

    for el in _children(fbd):
        tag = _strip_ns(el.tag)
        local_id = int(el.get("localId", "0"))
        if local_id in owner_of_id or local_id in feeder_literals:
            raise BadReference(f"duplicate localId {local_id}")
        if tag in ("inVariable", "outVariable", "inOutVariable"):
            expression = next((c.text or "" for c in _children(el) if _strip_ns(c.tag) == "expression"), "")
            is_literal = False
            if tag == "inVariable":
                try:
                    feeder_literals[local_id] = parse_literal(expression)
                    is_literal = True
                except ValueError:
                    is_literal = False
            if not is_literal:
                if expression not in var_kinds:
                    raise BadReference(f"expression '{expression}' is not a declared variable")
                owner_of_id[local_id] = expression
                if tag in ("outVariable", "inOutVariable"):
                    read_connections(el, Endpoint(expression))
        elif tag == "block":
            name = el.get("instanceName", "")
            type_name = el.get("typeName", "")
            owner_of_id[local_id] = name
            input_vars = [
                v
                for c in _children(el)
                if _strip_ns(c.tag) == "inputVariables"
                for v in _children(c)
            ]
            if type_name in STANDARD_FUNCTIONS:
                graph.functions.append(FunctionInstance(name, type_name, arity=len(input_vars)))
            else:
                graph.blocks.append(BlockInstance(name, type_name))
            for var in input_vars:
                pin = var.get("formalParameter", "")
                read_connections(var, Endpoint(name, pin))
        elif tag == "comment":
            continue
        else:
            raise UnsupportedElement(f"FBD element '{tag}'")

    for ref, formal, target in pending:
        if ref in feeder_literals:
            graph.parameters.append(ParameterSetting(target, feeder_literals[ref]))
        elif ref in owner_of_id:
            graph.connections.append(Connection(Endpoint(owner_of_id[ref], formal), target))
        else:
            raise BadReference(f"refLocalId {ref} does not resolve")

    return graph
