"""Collects the acceptance verdicts and repeats them in the terminal summary."""

import pytest

VERDICTS = []


@pytest.fixture
def verdict():
    """``verdict(number, title, ok, detail)`` prints one PASS/FAIL line and asserts ``ok``."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        VERDICTS.append((number, line))
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(VERDICTS):
            terminalreporter.write_line(line)
