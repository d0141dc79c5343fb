import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance pass/fail lines even when their tests passed."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERIA", None)
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
