import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parent.parent
CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; shown again in the terminal summary."""

    def record(key, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}"
        CRITERIA[key] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(CRITERIA, key=lambda k: (int(k.rstrip("abcde")), k)):
            terminalreporter.write_line(CRITERIA[key])
