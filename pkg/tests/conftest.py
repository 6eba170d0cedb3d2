"""Shared test plumbing: collects acceptance lines and reprints them in the
terminal summary so they stay visible under output capture."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
