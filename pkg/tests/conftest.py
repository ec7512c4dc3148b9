"""Shared test configuration: acceptance-criterion result reporting.

Each acceptance test records one line through the criterion_recorder
fixture; the lines are printed immediately and re-emitted together in
the terminal summary so the full checklist is visible in one block.
"""

import pytest

_ACCEPTANCE_LINES = []


def _record(number: int, title: str, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    line = f"{verdict} criterion {number:2d}: {title} [{detail}]"
    _ACCEPTANCE_LINES.append((number, line))
    print(line)


@pytest.fixture
def criterion_recorder():
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
