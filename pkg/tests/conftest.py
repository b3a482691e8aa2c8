import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def log(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:>2} [{status}] {title}"
        if detail:
            line += f" :: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
