import pytest

from slowdown.core import SlowdownModel
from slowdown.params import SlowdownParams

CRITERIA = []


@pytest.fixture(scope="session")
def model():
    return SlowdownModel()


@pytest.fixture(scope="session")
def linear_model():
    return SlowdownModel(SlowdownParams(r0=0.0))


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
