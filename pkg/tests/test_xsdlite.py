from __future__ import annotations

from pathlib import Path

import pytest

from fbdgen.fblibrary import bundled_library_path
from fbdgen.xsdlite import Schema, SchemaFeatureError

SCHEMA_PATH = Path(bundled_library_path()).parent / "plcopen_tc6_subset.xsd"


@pytest.fixture(scope="module")
def schema():
    return Schema(SCHEMA_PATH)


MINIMAL = """<?xml version="1.0" encoding="utf-8"?>
<project xmlns="http://www.plcopen.org/xml/tc6_0201">
  <fileHeader companyName="c" productName="p" productVersion="1" creationDateTime="2000-01-01T00:00:00"/>
  <contentHeader name="n">
    <coordinateInfo>
      <fbd><scaling x="10" y="10"/></fbd>
      <ld><scaling x="10" y="10"/></ld>
      <sfc><scaling x="10" y="10"/></sfc>
    </coordinateInfo>
  </contentHeader>
  <types>
    <dataTypes/>
    <pous>
      <pou name="d" pouType="program">
        <body><FBD/></body>
      </pou>
    </pous>
  </types>
  <instances><configurations/></instances>
</project>
"""


def test_minimal_document_is_valid(schema):
    assert schema.validate(MINIMAL) == []


def test_missing_required_attribute(schema):
    doc = MINIMAL.replace(' productVersion="1"', "")
    problems = schema.validate(doc)
    assert any("productVersion" in p for p in problems)


def test_undeclared_attribute(schema):
    doc = MINIMAL.replace('name="d"', 'name="d" bogus="1"')
    problems = schema.validate(doc)
    assert any("bogus" in p for p in problems)


def test_bad_attribute_type(schema):
    doc = MINIMAL.replace('creationDateTime="2000-01-01T00:00:00"', 'creationDateTime="yesterday"')
    problems = schema.validate(doc)
    assert any("dateTime" in p for p in problems)


def test_enumeration_enforced(schema):
    doc = MINIMAL.replace('pouType="program"', 'pouType="bogusType"')
    problems = schema.validate(doc)
    assert any("bogusType" in p for p in problems)


def test_unexpected_element(schema):
    doc = MINIMAL.replace("<dataTypes/>", "<dataTypes/><surprise/>")
    problems = schema.validate(doc)
    assert any("surprise" in p or "unexpected" in p for p in problems)


def test_sequence_order_enforced(schema):
    doc = MINIMAL.replace(
        "<dataTypes/>\n    <pous>", "<pous>"
    ).replace("</pous>", "</pous><dataTypes/>")
    assert schema.validate(doc) != []


def test_wrong_namespace(schema):
    doc = MINIMAL.replace("http://www.plcopen.org/xml/tc6_0201", "urn:other")
    problems = schema.validate(doc)
    assert any("namespace" in p for p in problems)


def test_not_well_formed(schema):
    assert schema.validate("<project>") != []


def test_unsupported_schema_feature(tmp_path):
    exotic = tmp_path / "s.xsd"
    exotic.write_text(
        """<xsd:schema xmlns:xsd="http://www.w3.org/2001/XMLSchema" targetNamespace="urn:x">
  <xsd:element name="a"><xsd:complexType><xsd:all/></xsd:complexType></xsd:element>
</xsd:schema>"""
    )
    with pytest.raises(SchemaFeatureError):
        Schema(exotic)
