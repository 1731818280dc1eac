import re

import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_line():
    """Record the one-line verdict for an acceptance item."""

    def record(item, passed, detail):
        ACCEPTANCE_LINES[item] = f"item {item:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[item])

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for item in sorted(ACCEPTANCE_LINES, key=lambda k: (int(re.match(r"\d+", str(k))[0]), str(k))):
        terminalreporter.write_line(ACCEPTANCE_LINES[item])
