from __future__ import annotations

import pytest

_criteria: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Call with (number, ok, detail); prints and records one summary line."""

    def record(number: int, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        print(line)
        _criteria[number] = line
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_criteria):
            terminalreporter.write_line(_criteria[n])
