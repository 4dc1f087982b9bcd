"""Hierarchical left-to-right auto-layout for validated diagrams.

Pipeline: mark a feedback edge set (DFS back edges), longest-path layering
on the acyclic remainder, barycenter crossing reduction with virtual nodes
for long edges, integer coordinate assignment on a fixed grid, orthogonal
edge routing (3-segment forward polylines through inter-layer gutters,
backward edges around the bottom in dedicated tracks), plus an SVG renderer.

All coordinates are abstract grid units; emitters scale them (1 unit = 10 px).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .fblibrary import Library
from .ir import Connection, FbdGraph, function_pins

GRID_UNIT_PX = 10

# Box geometry in grid units.
_HEADER = 2
_PIN_PITCH = 2
_MIN_BLOCK_WIDTH = 12
_VAR_HEIGHT = 2


@dataclass(frozen=True)
class LayoutConfig:
    margin: int = 4          # canvas border
    gutter: int = 6          # minimum horizontal gap between layers
    vgap: int = 3            # vertical gap between stacked boxes
    sweeps: int = 8          # barycenter down-up sweep pairs
    track_pitch: int = 2     # spacing between routing tracks
    overlap_margin: int = 2  # required clearance between any two boxes


@dataclass
class NodeBox:
    instance: str
    x: int
    y: int
    width: int
    height: int
    input_ports: dict[Optional[str], tuple[int, int]] = field(default_factory=dict)
    output_ports: dict[Optional[str], tuple[int, int]] = field(default_factory=dict)

    def overlaps(self, other: "NodeBox", margin: int = 0) -> bool:
        return not (
            self.x + self.width + margin <= other.x
            or other.x + other.width + margin <= self.x
            or self.y + self.height + margin <= other.y
            or other.y + other.height + margin <= self.y
        )


@dataclass
class RoutedEdge:
    connection: Connection
    polyline: list[tuple[int, int]]
    is_backward: bool


@dataclass
class LayoutedDiagram:
    graph: FbdGraph
    nodes: list[NodeBox]
    edges: list[RoutedEdge]
    canvas: tuple[int, int]

    def node(self, instance: str) -> NodeBox:
        for box in self.nodes:
            if box.instance == instance:
                return box
        raise KeyError(instance)


def _node_pins(graph: FbdGraph, library: Library, name: str) -> tuple[list[str], list[str], str, str]:
    """(input pin names, output pin names, kind, title) for an instance."""
    block = graph.find_block(name)
    if block is not None:
        bt = library.get(block.type_name)
        ins = [p.name for p in bt.inputs()] if bt else []
        outs = [p.name for p in bt.outputs()] if bt else []
        return ins, outs, "block", block.type_name
    func = graph.find_function(name)
    if func is not None:
        ins, outs = function_pins(func.function, func.arity)
        return [n for n, _ in ins], [n for n, _ in outs], "function", func.function
    return [], [], "variable", ""


def _box_size(name: str, title: str, ins: list[str], outs: list[str], kind: str) -> tuple[int, int]:
    if kind == "variable":
        return max(4, len(name) + 2), _VAR_HEIGHT
    pin_rows = max(len(ins), len(outs), 1)
    height = _HEADER + _PIN_PITCH * pin_rows
    longest_in = max((len(p) for p in ins), default=0)
    longest_out = max((len(p) for p in outs), default=0)
    width = max(_MIN_BLOCK_WIDTH, len(name) + 2, len(title) + 2, longest_in + longest_out + 4)
    return width, height


def _feedback_pairs(graph: FbdGraph) -> set[tuple[str, str]]:
    """Instance-level back edges found by DFS in canonical order."""
    adjacency: dict[str, list[str]] = {name: [] for name in sorted(graph.instance_names())}
    for conn in graph.connections:
        if conn.target.owner not in adjacency[conn.source.owner]:
            adjacency[conn.source.owner].append(conn.target.owner)
    for targets in adjacency.values():
        targets.sort()

    inputs = sorted(v.name for v in graph.variables if v.direction == "diagram_input")
    roots = inputs + [n for n in sorted(adjacency) if n not in set(inputs)]

    back: set[tuple[str, str]] = set()
    visited: set[str] = set()
    on_stack: set[str] = set()

    def dfs(start: str) -> None:
        stack: list[tuple[str, int]] = [(start, 0)]
        on_stack.add(start)
        visited.add(start)
        while stack:
            node, i = stack[-1]
            targets = adjacency[node]
            if i < len(targets):
                stack[-1] = (node, i + 1)
                nxt = targets[i]
                if nxt in on_stack:
                    back.add((node, nxt))
                elif nxt not in visited:
                    visited.add(nxt)
                    on_stack.add(nxt)
                    stack.append((nxt, 0))
            else:
                stack.pop()
                on_stack.discard(node)

    for root in roots:
        if root not in visited:
            dfs(root)
    return back


def _assign_layers(graph: FbdGraph, forward: list[Connection]) -> dict[str, int]:
    names = sorted(graph.instance_names())
    preds: dict[str, set[str]] = {n: set() for n in names}
    succs: dict[str, set[str]] = {n: set() for n in names}
    for conn in forward:
        if conn.source.owner != conn.target.owner:
            preds[conn.target.owner].add(conn.source.owner)
            succs[conn.source.owner].add(conn.target.owner)

    # Longest path over a topological order of the forward DAG.
    layer: dict[str, int] = {}
    remaining = {n: len(preds[n]) for n in names}
    queue = sorted(n for n in names if remaining[n] == 0)
    order: list[str] = []
    while queue:
        node = queue.pop(0)
        order.append(node)
        layer[node] = max((layer[p] + 1 for p in preds[node]), default=0)
        ready = sorted(
            s for s in succs[node] if all(p in layer for p in preds[s]) and s not in layer and s not in queue
        )
        queue = sorted(queue + ready)

    out_vars = {v.name for v in graph.variables if v.direction == "diagram_output"}
    core_max = max((lv for n, lv in layer.items() if n not in out_vars), default=0)
    if out_vars:
        for name in out_vars:
            layer[name] = max(layer[name], core_max + 1)
        # Anything fed by a right-shifted output variable must move further right.
        for node in order:
            layer[node] = max(layer[node], max((layer[p] + 1 for p in preds[node]), default=layer[node]))
    return layer


def _count_crossings(layers: list[list[str]], succ_index: dict[str, list[str]]) -> int:
    """Total edge crossings between adjacent layers (inversion counting)."""
    position = {}
    for nodes in layers:
        for i, n in enumerate(nodes):
            position[n] = i
    total = 0
    for li, nodes in enumerate(layers[:-1]):
        spans = []
        for n in nodes:
            for t in succ_index.get(n, ()):
                spans.append((position[n], position[t]))
        spans.sort()
        size = len(layers[li + 1]) + 1
        tree = [0] * (size + 1)  # Fenwick tree over target positions

        def add(i: int) -> None:
            i += 1
            while i <= size:
                tree[i] += 1
                i += i & (-i)

        def count_leq(i: int) -> int:
            i += 1
            acc = 0
            while i > 0:
                acc += tree[i]
                i -= i & (-i)
            return acc

        for k, (_, b) in enumerate(spans):
            total += k - count_leq(b)  # earlier spans with strictly larger target
            add(b)
    return total


def _barycenter_order(layers: list[list[str]], preds: dict[str, list[str]], succs: dict[str, list[str]], sweeps: int) -> list[list[str]]:
    best = [list(nodes) for nodes in layers]
    best_crossings = _count_crossings(best, succs)
    current = [list(nodes) for nodes in layers]

    def sweep(down: bool) -> None:
        indices = range(1, len(current)) if down else range(len(current) - 2, -1, -1)
        for li in indices:
            neighbor_pos = {}
            ref = current[li - 1] if down else current[li + 1]
            for i, n in enumerate(ref):
                neighbor_pos[n] = i
            adjacency = preds if down else succs
            keyed = []
            for i, n in enumerate(current[li]):
                anchors = [neighbor_pos[a] for a in adjacency.get(n, ()) if a in neighbor_pos]
                bary = sum(anchors) / len(anchors) if anchors else float(i)
                keyed.append((bary, n))
            current[li] = [n for _, n in sorted(keyed, key=lambda kn: (kn[0], kn[1]))]

    nonlocal_best = [best_crossings]
    for _ in range(sweeps):
        sweep(down=True)
        sweep(down=False)
        crossings = _count_crossings(current, succs)
        if crossings < nonlocal_best[0]:
            nonlocal_best[0] = crossings
            best = [list(nodes) for nodes in current]
        if crossings == 0:
            break
    return best


def layout(graph: FbdGraph, library: Library, config: LayoutConfig = LayoutConfig()) -> LayoutedDiagram:
    """Compute box coordinates and routed polylines for a validated graph.

    Deterministic: identical inputs produce an identical diagram.
    """
    back_pairs = _feedback_pairs(graph)
    forward = [c for c in graph.connections if (c.source.owner, c.target.owner) not in back_pairs]
    backward = [c for c in graph.connections if (c.source.owner, c.target.owner) in back_pairs]

    layer_of = _assign_layers(graph, forward)
    n_layers = max(layer_of.values(), default=0) + 1 if layer_of else 1

    # Ordering graph: real instances plus virtual nodes splitting long edges.
    layers: list[list[str]] = [[] for _ in range(n_layers)]
    for name in sorted(layer_of):
        layers[layer_of[name]].append(name)
    order_preds: dict[str, list[str]] = {}
    order_succs: dict[str, list[str]] = {}

    def add_order_edge(a: str, b: str) -> None:
        order_succs.setdefault(a, []).append(b)
        order_preds.setdefault(b, []).append(a)

    virtual_of_layer: dict[str, int] = {}
    for idx, conn in enumerate(sorted(forward, key=lambda c: (str(c.source), str(c.target)))):
        lu, lv = layer_of[conn.source.owner], layer_of[conn.target.owner]
        if conn.source.owner == conn.target.owner:
            continue
        prev = conn.source.owner
        for mid_layer in range(lu + 1, lv):
            vname = f"\x00virt{idx}@{mid_layer}"
            virtual_of_layer[vname] = mid_layer
            layers[mid_layer].append(vname)
            add_order_edge(prev, vname)
            prev = vname
        add_order_edge(prev, conn.target.owner)

    layers = _barycenter_order(layers, order_preds, order_succs, config.sweeps)

    # Box geometry per instance.
    boxes: dict[str, NodeBox] = {}
    meta: dict[str, tuple[list[str], list[str], str, str]] = {}
    for name in sorted(graph.instance_names()):
        ins, outs, kind, title = _node_pins(graph, library, name)
        meta[name] = (ins, outs, kind, title)
        width, height = _box_size(name, title, ins, outs, kind)
        boxes[name] = NodeBox(name, 0, 0, width, height)

    # Horizontal positions: gutters are widened to fit their routing tracks.
    tracks_in_gutter: dict[int, int] = {}
    for conn in forward:
        if conn.source.owner == conn.target.owner:
            continue
        g = layer_of[conn.target.owner] - 1
        tracks_in_gutter[g] = tracks_in_gutter.get(g, 0) + 1

    layer_width = [
        max((boxes[n].width for n in nodes if n in boxes), default=0) for nodes in layers
    ]
    layer_x: list[int] = []
    x = config.margin
    for li in range(n_layers):
        layer_x.append(x)
        gutter = max(config.gutter, 4 + tracks_in_gutter.get(li, 0) * config.track_pitch)
        x += layer_width[li] + gutter

    # Vertical stacking in the crossing-reduced order; virtual nodes keep a
    # small slot so the orders they encode stay visually meaningful.
    for li, nodes in enumerate(layers):
        y = config.margin
        for name in nodes:
            if name in boxes:
                box = boxes[name]
                box.x = layer_x[li]
                box.y = y
                y += box.height + config.vgap
            else:
                y += _PIN_PITCH

    # Port positions on box boundaries.
    for name, box in boxes.items():
        ins, outs, kind, _ = meta[name]
        if kind == "variable":
            box.input_ports[None] = (box.x, box.y + 1)
            box.output_ports[None] = (box.x + box.width, box.y + 1)
        else:
            for i, pin in enumerate(ins):
                box.input_ports[pin] = (box.x, box.y + _HEADER + _PIN_PITCH * i + 1)
            for i, pin in enumerate(outs):
                box.output_ports[pin] = (box.x + box.width, box.y + _HEADER + _PIN_PITCH * i + 1)

    core_bottom = max((b.y + b.height for b in boxes.values()), default=config.margin)
    core_right = max((b.x + b.width for b in boxes.values()), default=config.margin)

    # Route forward edges through the gutter left of the target layer.
    edges: list[RoutedEdge] = []
    gutter_cursor: dict[int, int] = {}
    routed_forward = sorted(
        (c for c in forward),
        key=lambda c: (
            boxes[c.target.owner].input_ports.get(c.target.pin, (0, 0))[1],
            boxes[c.source.owner].output_ports.get(c.source.pin, (0, 0))[1],
            str(c.source),
            str(c.target),
        ),
    )
    forward_routes: dict[int, RoutedEdge] = {}
    for conn in routed_forward:
        sx, sy = boxes[conn.source.owner].output_ports[conn.source.pin]
        tx, ty = boxes[conn.target.owner].input_ports[conn.target.pin]
        g = layer_of[conn.target.owner] - 1
        track = gutter_cursor.get(g, 0)
        gutter_cursor[g] = track + 1
        gutter_start = layer_x[g] + layer_width[g] if g >= 0 else config.margin
        mx = gutter_start + 2 + track * config.track_pitch
        if conn.source.owner == conn.target.owner:
            mx = sx + 2  # self loop routed just right of the box
        polyline = [(sx, sy), (mx, sy), (mx, ty), (tx, ty)]
        forward_routes[id(conn)] = RoutedEdge(conn, polyline, is_backward=False)

    backward_routes: dict[int, RoutedEdge] = {}
    for btrack, conn in enumerate(
        sorted(backward, key=lambda c: (str(c.source), str(c.target)))
    ):
        sx, sy = boxes[conn.source.owner].output_ports[conn.source.pin]
        tx, ty = boxes[conn.target.owner].input_ports[conn.target.pin]
        ych = core_bottom + 2 + btrack * config.track_pitch
        sxs = sx + 1 + btrack
        txs = max(1, tx - 1 - btrack)  # stubs never leave the canvas
        polyline = [(sx, sy), (sxs, sy), (sxs, ych), (txs, ych), (txs, ty), (tx, ty)]
        backward_routes[id(conn)] = RoutedEdge(conn, polyline, is_backward=True)

    for conn in graph.connections:  # one routed edge per connection, input order
        edges.append(forward_routes.get(id(conn)) or backward_routes[id(conn)])

    max_edge_x = max((x for e in edges for x, _ in e.polyline), default=core_right)
    max_edge_y = max((y for e in edges for _, y in e.polyline), default=core_bottom)
    canvas = (
        max(core_right, max_edge_x) + config.margin,
        max(core_bottom, max_edge_y) + config.margin,
    )
    ordered_boxes = [boxes[n] for n in sorted(boxes)]
    return LayoutedDiagram(graph=graph, nodes=ordered_boxes, edges=edges, canvas=canvas)


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_svg(diagram: LayoutedDiagram, library: Library) -> str:
    """Standalone SVG for a layouted diagram.

    One <rect> per node, one <polyline> per edge; labels for the title,
    instance names, type names, pins and parameter values. Connections
    realizing the detected strategy are highlighted.
    """
    s = GRID_UNIT_PX
    w, h = diagram.canvas[0] * s, diagram.canvas[1] * s
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        "<style>",
        "rect.node { fill: #f8f9fb; stroke: #30343c; stroke-width: 1.5; }",
        "rect.var { fill: #eef3e8; }",
        "polyline { fill: none; stroke: #555a63; stroke-width: 1.5; }",
        "polyline.strategy { stroke: #61b3e4; stroke-width: 2.5; }",
        "polyline.backward { stroke-dasharray: 6 3; }",
        "text { font-family: monospace; font-size: 11px; fill: #20242a; }",
        "text.title { font-size: 15px; font-weight: bold; }",
        "text.type { fill: #6b7280; }",
        "text.param { fill: #8a5a00; }",
        "</style>",
        f'<text class="title" x="{s}" y="{2 * s}">{_esc(diagram.graph.name)}</text>',
    ]

    graph = diagram.graph
    params_at = {(p.endpoint.owner, p.endpoint.pin): p.value.text for p in graph.parameters}

    for edge in diagram.edges:
        classes = []
        if edge.connection.is_strategy:
            classes.append("strategy")
        if edge.is_backward:
            classes.append("backward")
        cls = f' class="{" ".join(classes)}"' if classes else ""
        points = " ".join(f"{x * s},{y * s}" for x, y in edge.polyline)
        lines.append(f'<polyline{cls} points="{points}"/>')

    for box in diagram.nodes:
        is_var = graph.find_variable(box.instance) is not None
        cls = "node var" if is_var else "node"
        lines.append(
            f'<rect class="{cls}" x="{box.x * s}" y="{box.y * s}" '
            f'width="{box.width * s}" height="{box.height * s}"/>'
        )
        if is_var:
            lines.append(
                f'<text x="{(box.x + 1) * s}" y="{(box.y + 1) * s + 4}">{_esc(box.instance)}</text>'
            )
            continue
        block = graph.find_block(box.instance)
        func = graph.find_function(box.instance)
        type_label = block.type_name if block else func.function
        lines.append(f'<text x="{(box.x + 1) * s}" y="{box.y * s - 3}">{_esc(box.instance)}</text>')
        lines.append(
            f'<text class="type" x="{(box.x + 1) * s}" y="{(box.y + 1) * s + 4}">{_esc(type_label)}</text>'
        )
        for pin, (px, py) in box.input_ports.items():
            lines.append(f'<text x="{px * s + 3}" y="{py * s + 3}">{_esc(pin)}</text>')
            value = params_at.get((box.instance, pin))
            if value is not None:
                lines.append(
                    f'<text class="param" text-anchor="end" x="{px * s - 4}" y="{py * s + 3}">'
                    f"{_esc(f'{pin} := {value}')}</text>"
                )
        for pin, (px, py) in box.output_ports.items():
            lines.append(
                f'<text text-anchor="end" x="{px * s - 3}" y="{py * s + 3}">{_esc(pin)}</text>'
            )

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
