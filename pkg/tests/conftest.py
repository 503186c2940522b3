from pathlib import Path

import pytest

from multispan.corpus import make_example

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def xyz():
    """The "X Y Z Y Z" passage with answer {"X", "Z"} and an empty question."""
    return make_example("xyz", "", "X Y Z Y Z", ["X", "Z"])


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
