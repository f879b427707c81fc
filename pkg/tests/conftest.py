"""Collects one verdict line per acceptance criterion and prints them after the run."""

from __future__ import annotations

import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """``verdict(number, ok, detail)`` records a criterion line, prints it, then asserts ``ok``."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
