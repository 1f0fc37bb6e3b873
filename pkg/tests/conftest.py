import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary and echo it."""

    def _report(label, passed, detail):
        line = f"{label}: {'PASS' if passed else 'FAIL'} | {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
