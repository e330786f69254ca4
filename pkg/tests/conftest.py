import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion.

    Usage: ``with criterion(3, "detail") as c: ...``; the line is printed in
    the terminal summary whether the body passes or raises.
    """

    class _Rec:
        def __init__(self, n, detail=""):
            self.n, self.detail = n, detail

        def __enter__(self):
            return self

        def __exit__(self, et, ev, tb):
            CRITERIA[self.n] = (et is None, self.detail if et is None else f"{self.detail} :: {ev}")
            return False

    return _Rec


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
