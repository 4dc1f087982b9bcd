"""Validation of XML documents against the XSD feature subset used by the
bundled schema: global elements, named and inline complex types, sequences,
choices, occurrence bounds, typed attributes and enumerations.

This exists because a full XSD processor is not available in the target
environment; the implemented subset is exactly what the bundled schema
declares, and unknown schema constructs are rejected loudly.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

XSD_NS = "{http://www.w3.org/2001/XMLSchema}"

_SIMPLE_TYPE_PATTERNS = {
    "xsd:string": None,
    "xsd:decimal": re.compile(r"-?[0-9]+(\.[0-9]+)?\Z"),
    "xsd:integer": re.compile(r"-?[0-9]+\Z"),
    "xsd:unsignedLong": re.compile(r"[0-9]+\Z"),
    "xsd:boolean": re.compile(r"(true|false|0|1)\Z"),
    "xsd:dateTime": re.compile(r"[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9]{2}:[0-9]{2}:[0-9]{2}\Z"),
}


class SchemaFeatureError(Exception):
    """The schema uses an XSD construct this validator does not implement."""


@dataclass
class Attribute:
    name: str
    type_name: str
    required: bool
    enum: Optional[list[str]] = None


@dataclass
class ElementParticle:
    name: str
    type_: Union["ComplexType", str]  # complex type or simple type name
    min_occurs: int
    max_occurs: Optional[int]  # None = unbounded


@dataclass
class ChoiceParticle:
    options: dict[str, Union["ComplexType", str]]
    min_occurs: int
    max_occurs: Optional[int]


@dataclass
class ComplexType:
    particles: list[Union[ElementParticle, ChoiceParticle]] = field(default_factory=list)
    attributes: list[Attribute] = field(default_factory=list)
    choice_content: bool = False  # particles form a single top-level choice


class Schema:
    def __init__(self, schema_path: str | Path):
        root = ET.parse(str(schema_path)).getroot()
        self.target_namespace = root.get("targetNamespace", "")
        self._named_types: dict[str, ComplexType] = {}
        self._globals: dict[str, ElementParticle] = {}
        for child in root:
            if child.tag == f"{XSD_NS}complexType":
                self._named_types[child.get("name")] = self._parse_complex_type(child)
            elif child.tag == f"{XSD_NS}element":
                particle = self._parse_element(child, 1, 1)
                self._globals[particle.name] = particle
            else:
                raise SchemaFeatureError(f"top-level {child.tag}")

    # -- schema parsing ----------------------------------------------------

    def _occurs(self, el: ET.Element, default_min=1, default_max=1) -> tuple[int, Optional[int]]:
        mn = int(el.get("minOccurs", default_min))
        mx_raw = el.get("maxOccurs", default_max)
        mx = None if mx_raw == "unbounded" else int(mx_raw)
        return mn, mx

    def _resolve_type(self, name: str) -> Union[ComplexType, str]:
        if name.startswith("xsd:"):
            if name not in _SIMPLE_TYPE_PATTERNS:
                raise SchemaFeatureError(f"simple type {name}")
            return name
        local = name.split(":", 1)[-1]
        if local not in self._named_types:
            raise SchemaFeatureError(f"unknown named type {name}")
        return self._named_types[local]

    def _parse_element(self, el: ET.Element, default_min=1, default_max=1) -> ElementParticle:
        mn, mx = self._occurs(el, default_min, default_max)
        name = el.get("name")
        type_attr = el.get("type")
        if type_attr is not None:
            return ElementParticle(name, self._resolve_type(type_attr), mn, mx)
        inline = el.find(f"{XSD_NS}complexType")
        if inline is None:
            raise SchemaFeatureError(f"element '{name}' without a type")
        return ElementParticle(name, self._parse_complex_type(inline), mn, mx)

    def _parse_attribute(self, el: ET.Element) -> Attribute:
        name = el.get("name")
        required = el.get("use") == "required"
        type_attr = el.get("type")
        if type_attr is not None:
            if type_attr not in _SIMPLE_TYPE_PATTERNS:
                raise SchemaFeatureError(f"attribute type {type_attr}")
            return Attribute(name, type_attr, required)
        simple = el.find(f"{XSD_NS}simpleType")
        restriction = simple.find(f"{XSD_NS}restriction") if simple is not None else None
        if restriction is None:
            raise SchemaFeatureError(f"attribute '{name}' without a usable type")
        values = [e.get("value") for e in restriction.findall(f"{XSD_NS}enumeration")]
        return Attribute(name, restriction.get("base", "xsd:string"), required, enum=values)

    def _parse_complex_type(self, el: ET.Element) -> ComplexType:
        ct = ComplexType()
        for child in el:
            if child.tag == f"{XSD_NS}sequence":
                for particle in child:
                    if particle.tag == f"{XSD_NS}element":
                        ct.particles.append(self._parse_element(particle))
                    elif particle.tag == f"{XSD_NS}choice":
                        ct.particles.append(self._parse_choice(particle))
                    else:
                        raise SchemaFeatureError(f"sequence particle {particle.tag}")
            elif child.tag == f"{XSD_NS}choice":
                choice = self._parse_choice(child)
                ct.particles.append(choice)
                ct.choice_content = True
            elif child.tag == f"{XSD_NS}attribute":
                ct.attributes.append(self._parse_attribute(child))
            else:
                raise SchemaFeatureError(f"complexType child {child.tag}")
        return ct

    def _parse_choice(self, el: ET.Element) -> ChoiceParticle:
        mn, mx = self._occurs(el)
        options: dict[str, Union[ComplexType, str]] = {}
        for option in el:
            if option.tag != f"{XSD_NS}element":
                raise SchemaFeatureError(f"choice particle {option.tag}")
            particle = self._parse_element(option)
            options[particle.name] = particle.type_
        return ChoiceParticle(options, mn, mx)

    # -- instance validation ------------------------------------------------

    def validate(self, xml_text: str) -> list[str]:
        """Return all violations found; an empty list means the document is valid."""
        problems: list[str] = []
        try:
            root = ET.fromstring(xml_text)
        except ET.ParseError as exc:
            return [f"not well-formed: {exc}"]
        name, ns = self._split(root.tag)
        if ns != self.target_namespace:
            problems.append(f"root namespace '{ns}' != '{self.target_namespace}'")
            return problems
        if name not in self._globals:
            problems.append(f"no global element '{name}'")
            return problems
        self._validate_element(root, self._globals[name].type_, f"/{name}", problems)
        return problems

    @staticmethod
    def _split(tag: str) -> tuple[str, str]:
        if tag.startswith("{"):
            ns, _, local = tag[1:].partition("}")
            return local, ns
        return tag, ""

    def _check_simple(self, value: str, type_name: str, where: str, problems: list[str]) -> None:
        pattern = _SIMPLE_TYPE_PATTERNS[type_name]
        if pattern is not None and not pattern.match(value.strip()):
            problems.append(f"{where}: value '{value}' is not a {type_name}")

    def _validate_element(self, el: ET.Element, type_, path: str, problems: list[str]) -> None:
        if isinstance(type_, str):  # simple content
            if len(el) or el.attrib:
                problems.append(f"{path}: simple element with children or attributes")
            self._check_simple(el.text or "", type_, path, problems)
            return

        declared = {a.name: a for a in type_.attributes}
        for attr_name, value in el.attrib.items():
            if attr_name == "xmlns" or attr_name.startswith("{"):
                continue
            attr = declared.get(attr_name)
            if attr is None:
                problems.append(f"{path}: undeclared attribute '{attr_name}'")
                continue
            self._check_simple(value, attr.type_name, f"{path}@{attr_name}", problems)
            if attr.enum is not None and value not in attr.enum:
                problems.append(f"{path}@{attr_name}: '{value}' not in {attr.enum}")
        for attr in type_.attributes:
            if attr.required and attr.name not in el.attrib:
                problems.append(f"{path}: missing required attribute '{attr.name}'")

        if el.text and el.text.strip():
            problems.append(f"{path}: unexpected text content")

        children = [(self._split(c.tag)[0], c) for c in el]
        i = 0
        for particle in type_.particles:
            matched = 0
            if isinstance(particle, ElementParticle):
                while i < len(children) and children[i][0] == particle.name and (
                    particle.max_occurs is None or matched < particle.max_occurs
                ):
                    self._validate_element(
                        children[i][1], particle.type_, f"{path}/{particle.name}[{matched}]", problems
                    )
                    matched += 1
                    i += 1
                if matched < particle.min_occurs:
                    problems.append(f"{path}: expected element '{particle.name}'")
            else:
                while i < len(children) and children[i][0] in particle.options and (
                    particle.max_occurs is None or matched < particle.max_occurs
                ):
                    name = children[i][0]
                    self._validate_element(
                        children[i][1], particle.options[name], f"{path}/{name}[{matched}]", problems
                    )
                    matched += 1
                    i += 1
                if matched < particle.min_occurs:
                    problems.append(f"{path}: expected one of {sorted(particle.options)}")
        if i < len(children):
            problems.append(f"{path}: unexpected element '{children[i][0]}'")
