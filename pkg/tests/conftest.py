from __future__ import annotations

from tests.acceptance_report import CRITERIA, RESULTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, title in CRITERIA:
        status = RESULTS.get(name, "SKIP")
        terminalreporter.write_line(f"{status}  {name}: {title}")
