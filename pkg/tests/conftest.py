from __future__ import annotations

from pathlib import Path

import pytest

from fbdgen.fblibrary import load_bundled_library
from fbdgen.ir import parse_pseudocode

REPO = Path(__file__).resolve().parents[1]
FIXTURES = REPO / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def library():
    return load_bundled_library()


@pytest.fixture(scope="session")
def neutralizer_text() -> str:
    return (FIXTURES / "diagrams" / "neutralizer.fbdpc").read_text(encoding="utf-8")


@pytest.fixture()
def neutralizer_graph(neutralizer_text):
    # Parsed fresh per test: strategy stamping mutates connection flags.
    return parse_pseudocode(neutralizer_text)


@pytest.fixture(scope="session")
def ammonium_md() -> str:
    return (FIXTURES / "narratives" / "ammonium_nitrate.md").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def ammonium_path() -> Path:
    return FIXTURES / "narratives" / "ammonium_nitrate.md"


@pytest.fixture(scope="session")
def ammonium_archive() -> Path:
    return FIXTURES / "replay" / "ammonium"
