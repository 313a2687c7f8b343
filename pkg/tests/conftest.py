"""Shared pytest hooks for the widthlab test suite."""

from __future__ import annotations

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance-criterion verdict lines after the run.

    The acceptance tests print one ``[criterion NN] PASS/FAIL`` line each;
    pytest captures stdout of passing tests, so this hook repeats the
    collected lines where they are always visible.
    """
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "CRITERION_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
