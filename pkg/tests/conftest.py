import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []


class _Criterion:
    def __init__(self, tag: str, title: str, limit_s: float):
        self.tag, self.title, self.limit_s = tag, title, limit_s
        self.detail = ""


@pytest.fixture
def criterion():
    """Context manager that times one acceptance criterion and records a PASS/FAIL line."""

    @contextmanager
    def run(tag: str, title: str, limit_s: float):
        c = _Criterion(tag, title, limit_s)
        start = time.perf_counter()
        ok = False
        try:
            yield c
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            in_time = elapsed < limit_s
            status = "PASS" if ok and in_time else "FAIL"
            timing = f"{elapsed:.2f}s < {limit_s:g}s" if in_time else f"{elapsed:.2f}s exceeds {limit_s:g}s"
            line = f"[{status}] {tag} {title}: {c.detail} ({timing})"
            ACCEPTANCE_LINES.append(line)
            print(line)
        assert in_time, f"{tag} took {elapsed:.2f}s, limit {limit_s}s"

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
