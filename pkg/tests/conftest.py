import json
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))  # for reference_axml / oracles


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def expected_permissions() -> dict:
    return json.loads((FIXTURES / "expected.json").read_text())


@pytest.fixture(scope="session")
def fixture_apks() -> dict:
    return {p.stem: p.read_bytes() for p in sorted(FIXTURES.glob("*.apk"))}


def pytest_terminal_summary(terminalreporter):
    import gate

    lines = gate.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
