from __future__ import annotations

import pytest

# criterion number -> {part: (passed, detail)}, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, dict[str, tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion (or one part of it)."""

    def record(number: int, passed: bool, detail: str, part: str = "") -> bool:
        ACCEPTANCE.setdefault(number, {})[part] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for p, _ in parts.values())
        detail = "; ".join(f"({k}) {d}" if k else d for k, (_, d) in sorted(parts.items()))
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
