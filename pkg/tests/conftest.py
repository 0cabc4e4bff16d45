"""Shared fixtures and the acceptance-criterion summary reporter."""

import pytest

_CRITERION_RESULTS: dict[str, tuple[bool, str]] = {}


def record_criterion(number: str, passed: bool, detail: str = "") -> None:
    """Register one acceptance criterion outcome for the final summary."""
    _CRITERION_RESULTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERION_RESULTS, key=lambda s: (len(s), s)):
        passed, detail = _CRITERION_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number}: {status}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record-and-assert helper: logs the outcome, then enforces it."""

    def check(number: str, passed: bool, detail: str = ""):
        record_criterion(number, bool(passed), detail)
        assert passed, f"acceptance criterion {number} failed: {detail}"

    return check
