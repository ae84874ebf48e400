"""Suite-wide pytest wiring."""

import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the per-criterion verdicts after a captured run.

    The acceptance module prints one PASS/FAIL line per criterion; default
    capture hides those for passing tests, so repeat them here.
    """
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
