"""Shared pytest plumbing.

The acceptance module appends one PASS/FAIL line per criterion to
ACCEPTANCE_LINES; the summary hook reprints them at the end of the run so
they are visible in plain `pytest -v` output regardless of capture.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
