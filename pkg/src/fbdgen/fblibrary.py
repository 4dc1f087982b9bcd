"""Function block library model: typed block definitions loaded from a JSON
file, plus the built-in catalog of control-strategy composition patterns.

The bundled BASIC_LIB covers signal conversion, PID/ratio/cascade control,
valves and pump motors. Libraries are data, not code, so a different block
set can be dropped in without touching the generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .ir import DataKind, FbdGraph, Literal, is_identifier, parse_literal, serialize_pseudocode

# Pins whose parameters count as alarm configuration unless the library
# definition tags pins explicitly.
DEFAULT_ALARM_PINS = ("H_LIM", "L_LIM", "HH_LIM", "LL_LIM")


class LibraryError(Exception):
    """Library definition rejected; message carries the offending location."""


@dataclass(frozen=True)
class Pin:
    name: str
    direction: str  # input | output
    kind: DataKind
    description: str = ""
    default: Optional[Literal] = None
    alarm: bool = False


@dataclass(frozen=True)
class BlockType:
    name: str
    description: str
    category: str  # io_conversion | control | actuator | support
    pins: tuple[Pin, ...]

    def inputs(self) -> list[Pin]:
        return [p for p in self.pins if p.direction == "input"]

    def outputs(self) -> list[Pin]:
        return [p for p in self.pins if p.direction == "output"]

    def pin(self, name: str, direction: Optional[str] = None) -> Optional[Pin]:
        for p in self.pins:
            if p.name == name and (direction is None or p.direction == direction):
                return p
        return None


@dataclass(frozen=True)
class Library:
    name: str
    version: str
    block_types: tuple[BlockType, ...]

    def get(self, type_name: str) -> Optional[BlockType]:
        for bt in self.block_types:
            if bt.name == type_name:
                return bt
        return None

    def type_names(self) -> list[str]:
        return [bt.name for bt in self.block_types]


@dataclass(frozen=True)
class TemplateConnection:
    source_role: str
    source_pin: str
    target_role: str
    target_pin: str

    def __str__(self) -> str:
        return f"{self.source_role}.{self.source_pin} -> {self.target_role}.{self.target_pin}"


@dataclass(frozen=True)
class StrategyPattern:
    """A named block-composition pattern a control strategy induces."""

    name: str
    description: str
    roles: tuple[tuple[str, tuple[str, ...]], ...]  # (role, allowed block type names)
    template_connections: tuple[TemplateConnection, ...]

    def role_names(self) -> list[str]:
        return [r for r, _ in self.roles]

    def allowed_types(self, role: str) -> tuple[str, ...]:
        for r, types in self.roles:
            if r == role:
                return types
        raise KeyError(role)


_VALID_CATEGORIES = ("io_conversion", "control", "actuator", "support")
_MAX_PINS_PER_DIRECTION = 10


def _pin_from_json(block_name: str, entry: dict) -> Pin:
    where = f"block '{block_name}', pin '{entry.get('name', '?')}'"
    for key in ("name", "dir", "kind"):
        if key not in entry:
            raise LibraryError(f"SchemaViolation: {where}: missing '{key}'")
    if entry["dir"] not in ("input", "output"):
        raise LibraryError(f"SchemaViolation: {where}: dir must be input or output")
    try:
        kind = DataKind(entry["kind"])
    except ValueError:
        raise LibraryError(f"SchemaViolation: {where}: unknown kind '{entry['kind']}'") from None
    default = None
    if "default" in entry:
        try:
            default = parse_literal(str(entry["default"]))
        except ValueError:
            raise LibraryError(f"BadPinKind: {where}: malformed default {entry['default']!r}") from None
        if default.kind is not kind:
            raise LibraryError(
                f"BadPinKind: {where}: default {default.text} is {default.kind.value}, pin is {kind.value}"
            )
    return Pin(
        name=entry["name"],
        direction=entry["dir"],
        kind=kind,
        description=entry.get("description", ""),
        default=default,
        alarm=bool(entry.get("alarm", entry["name"] in DEFAULT_ALARM_PINS)),
    )


def parse_library(data: dict, source: str = "<memory>") -> Library:
    """Validate a parsed library document and build the Library object."""
    for key in ("name", "version", "blocks"):
        if key not in data:
            raise LibraryError(f"SchemaViolation: {source}: missing top-level '{key}'")
    block_types: list[BlockType] = []
    seen: set[str] = set()
    for entry in data["blocks"]:
        name = entry.get("name", "")
        if not is_identifier(name):
            raise LibraryError(f"SchemaViolation: {source}: bad block name {name!r}")
        if name in seen:
            raise LibraryError(f"DuplicateBlockType: {source}: block '{name}' defined twice")
        seen.add(name)
        if entry.get("category") not in _VALID_CATEGORIES:
            raise LibraryError(f"SchemaViolation: block '{name}': bad category {entry.get('category')!r}")
        pins = [_pin_from_json(name, p) for p in entry.get("pins", [])]
        if not pins:
            raise LibraryError(f"SchemaViolation: block '{name}': at least one pin required")
        for direction in ("input", "output"):
            names = [p.name for p in pins if p.direction == direction]
            if len(names) != len(set(names)):
                raise LibraryError(f"SchemaViolation: block '{name}': duplicate {direction} pin")
            if len(names) > _MAX_PINS_PER_DIRECTION:
                raise LibraryError(
                    f"SchemaViolation: block '{name}': more than {_MAX_PINS_PER_DIRECTION} {direction} pins"
                )
        block_types.append(
            BlockType(name, entry.get("description", ""), entry["category"], tuple(pins))
        )
    return Library(data["name"], data["version"], tuple(block_types))


def load_library(definition_file: str | Path) -> Library:
    """Load and validate a library definition JSON file."""
    path = Path(definition_file)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LibraryError(f"SchemaViolation: {path}: {exc}") from None
    return parse_library(data, source=str(path))


def bundled_library_path() -> Path:
    return Path(str(resources.files("fbdgen").joinpath("data/basic_lib.json")))


def load_bundled_library() -> Library:
    return load_library(bundled_library_path())


def _tc(src: str, dst: str) -> TemplateConnection:
    s_role, s_pin = src.split(".")
    t_role, t_pin = dst.split(".")
    return TemplateConnection(s_role, s_pin, t_role, t_pin)


_CATALOG: tuple[StrategyPattern, ...] = (
    StrategyPattern(
        name="pid",
        description="Single-loop feedback control: one transmitter, one PID "
        "controller, one modulated actuator.",
        roles=(
            ("sensor", ("ANALOG_IN",)),
            ("controller", ("PID_BASIC",)),
            ("actuator", ("VALVE_ELECTRIC", "PUMP_MOTOR")),
        ),
        template_connections=(
            _tc("sensor.PV", "controller.PV"),
            _tc("controller.OUT", "actuator.CMD"),
        ),
    ),
    StrategyPattern(
        name="cascade",
        description="Outer loop sets the inner loop's setpoint; the inner "
        "loop drives the actuator.",
        roles=(
            ("outer_sensor", ("ANALOG_IN",)),
            ("outer_controller", ("PID_CASCADE",)),
            ("inner_sensor", ("ANALOG_IN",)),
            ("inner_controller", ("PID_BASIC",)),
            ("actuator", ("VALVE_ELECTRIC", "PUMP_MOTOR")),
        ),
        template_connections=(
            _tc("outer_sensor.PV", "outer_controller.PV"),
            _tc("inner_sensor.PV", "inner_controller.PV"),
            _tc("outer_controller.SP_OUT", "inner_controller.SP"),
            _tc("inner_controller.OUT", "actuator.CMD"),
        ),
    ),
    StrategyPattern(
        name="ratio",
        description="Hold the controlled stream at a fixed ratio of the wild "
        "stream: a ratio station computes the controlled loop's setpoint.",
        roles=(
            ("wild_sensor", ("ANALOG_IN",)),
            ("controlled_sensor", ("ANALOG_IN",)),
            ("ratio_controller", ("RATIO_CONTROL",)),
            ("wild_controller", ("PID_BASIC",)),
            ("controlled_controller", ("PID_BASIC",)),
        ),
        template_connections=(
            _tc("wild_sensor.PV", "wild_controller.PV"),
            _tc("wild_sensor.PV", "ratio_controller.PV_WILD"),
            _tc("controlled_sensor.PV", "controlled_controller.PV"),
            _tc("ratio_controller.SP_OUT", "controlled_controller.SP"),
        ),
    ),
    StrategyPattern(
        name="feedforward",
        description="Feedback loop plus a measured-disturbance path scaled "
        "by a gain station; the two are summed by glue logic.",
        roles=(
            ("pv_sensor", ("ANALOG_IN",)),
            ("disturbance_sensor", ("ANALOG_IN",)),
            ("controller", ("PID_BASIC",)),
            ("ff_gain", ("RATIO_CONTROL",)),
        ),
        template_connections=(
            _tc("pv_sensor.PV", "controller.PV"),
            _tc("disturbance_sensor.PV", "ff_gain.PV_WILD"),
        ),
    ),
    StrategyPattern(
        name="split_range",
        description="One controller output split across two actuators "
        "operating in different ranges.",
        roles=(
            ("sensor", ("ANALOG_IN",)),
            ("controller", ("PID_BASIC",)),
            ("splitter", ("SPLIT_RANGE",)),
            ("actuator_low", ("VALVE_ELECTRIC",)),
            ("actuator_high", ("VALVE_ELECTRIC",)),
        ),
        template_connections=(
            _tc("sensor.PV", "controller.PV"),
            _tc("controller.OUT", "splitter.IN"),
            _tc("splitter.OUT_A", "actuator_low.CMD"),
            _tc("splitter.OUT_B", "actuator_high.CMD"),
        ),
    ),
    StrategyPattern(
        name="duty_standby",
        description="Two pumps coordinated so one runs on duty and the "
        "other takes over on fault or changeover.",
        roles=(
            ("coordinator", ("DUTY_STANDBY",)),
            ("duty_pump", ("PUMP_MOTOR",)),
            ("standby_pump", ("PUMP_MOTOR",)),
        ),
        template_connections=(
            _tc("coordinator.DUTY_CMD", "duty_pump.RUN"),
            _tc("coordinator.STANDBY_CMD", "standby_pump.RUN"),
            _tc("duty_pump.FAULT", "coordinator.DUTY_FAULT"),
            _tc("standby_pump.FAULT", "coordinator.STANDBY_FAULT"),
        ),
    ),
    StrategyPattern(
        name="on_off",
        description="Discrete two-state control: a threshold alarm on the "
        "measurement drives a digital output.",
        roles=(
            ("sensor", ("ANALOG_IN",)),
            ("switch", ("DIGITAL_OUT",)),
        ),
        template_connections=(
            _tc("sensor.H_ALM", "switch.IN"),
        ),
    ),
)


def strategy_catalog() -> list[StrategyPattern]:
    """The built-in strategy patterns, in stable order."""
    return list(_CATALOG)


def get_strategy(name: str) -> Optional[StrategyPattern]:
    for pattern in _CATALOG:
        if pattern.name == name:
            return pattern
    return None


def validate_pattern(pattern: StrategyPattern, library: Library) -> list[str]:
    """Check a pattern against a library; returns human-readable problems.

    Every role's allowed types must exist, every template pin must exist on
    every allowed type for its role with one shared kind, sources must be
    outputs and targets inputs.
    """
    problems: list[str] = []
    role_types: dict[str, tuple[str, ...]] = dict(pattern.roles)
    for role, type_names in pattern.roles:
        for tn in type_names:
            if library.get(tn) is None:
                problems.append(f"{pattern.name}: role '{role}': unknown block type '{tn}'")
    for conn in pattern.template_connections:
        for role in (conn.source_role, conn.target_role):
            if role not in role_types:
                problems.append(f"{pattern.name}: {conn}: unknown role '{role}'")
        if problems:
            continue
        src_kinds = set()
        dst_kinds = set()
        for tn in role_types[conn.source_role]:
            bt = library.get(tn)
            pin = bt.pin(conn.source_pin, "output") if bt else None
            if pin is None:
                problems.append(f"{pattern.name}: {conn}: '{tn}' has no output pin '{conn.source_pin}'")
            else:
                src_kinds.add(pin.kind)
        for tn in role_types[conn.target_role]:
            bt = library.get(tn)
            pin = bt.pin(conn.target_pin, "input") if bt else None
            if pin is None:
                problems.append(f"{pattern.name}: {conn}: '{tn}' has no input pin '{conn.target_pin}'")
            else:
                dst_kinds.add(pin.kind)
        if src_kinds and dst_kinds and (len(src_kinds | dst_kinds) != 1):
            problems.append(f"{pattern.name}: {conn}: endpoint kinds differ ({src_kinds} vs {dst_kinds})")
    return problems


class UnknownBlockType(Exception):
    pass


def context_pack(
    library: Library,
    block_type_names: list[str],
    strategy: Optional[StrategyPattern] = None,
    existing_logic: Optional[FbdGraph] = None,
) -> str:
    """Render the prompt context: selected type definitions in library order,
    the strategy's composition pattern, and any pre-existing logic."""
    wanted = set(block_type_names)
    unknown = wanted - set(library.type_names())
    if unknown:
        raise UnknownBlockType(", ".join(sorted(unknown)))

    lines: list[str] = [f"LIBRARY {library.name} {library.version}", ""]
    for bt in library.block_types:
        if bt.name not in wanted:
            continue
        lines.append(f"BLOCK TYPE {bt.name} ({bt.category}): {bt.description}")
        for pin in bt.pins:
            default = f" [default {pin.default.text}]" if pin.default is not None else ""
            lines.append(f"  {pin.direction:<6} {pin.name} : {pin.kind.value}{default} -- {pin.description}")
        lines.append("")

    if strategy is not None:
        lines.append(f"CONTROL STRATEGY {strategy.name}: {strategy.description}")
        lines.append("Roles:")
        for role, types in strategy.roles:
            lines.append(f"  {role}: one of {', '.join(types)}")
        lines.append("Required connections:")
        for conn in strategy.template_connections:
            lines.append(f"  {conn}")
        lines.append("")

    if existing_logic is not None:
        lines.append("EXISTING LOGIC (extend, do not recreate):")
        lines.append(serialize_pseudocode(existing_logic).rstrip("\n"))
        lines.append("")

    return "\n".join(lines).rstrip("\n") + "\n"


def export_catalog() -> list[dict]:
    """Strategy catalog as plain data, mirroring the library JSON schema."""
    out = []
    for p in _CATALOG:
        out.append(
            {
                "name": p.name,
                "description": p.description,
                "roles": [{"role": r, "allowed": list(types)} for r, types in p.roles],
                "template_connections": [str(c) for c in p.template_connections],
            }
        )
    return out
