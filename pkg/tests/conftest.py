"""Shared test plumbing: acceptance criteria summary lines."""

import pytest

_criterion_lines: list[str] = []


@pytest.fixture
def criterion():
    """Recorder used by the acceptance tests to emit one line per criterion."""
    return record_criterion


def record_criterion(ok: bool, label: str) -> None:
    """Register a one-line verdict shown in the terminal summary."""
    _criterion_lines.append(f"[{'PASS' if ok else 'FAIL'}] {label}")


def pytest_terminal_summary(terminalreporter):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _criterion_lines:
        terminalreporter.write_line(line)
