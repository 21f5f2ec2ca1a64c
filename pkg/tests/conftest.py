import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record_criterion():
    """Record one pass/fail line per acceptance criterion for the summary."""

    def record(label, passed, detail=""):
        _ACCEPTANCE.append((label, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {label} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
