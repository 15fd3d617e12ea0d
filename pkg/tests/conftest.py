import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; all lines are echoed in the terminal summary."""

    def record(number, passed, detail, seconds=None):
        timing = f" ({seconds:.2f} s)" if seconds is not None else ""
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}{timing}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
