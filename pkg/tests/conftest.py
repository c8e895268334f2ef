import numpy as np
import pytest

from fracbridge.sde import ModelSpec, make_drift


@pytest.fixture
def fou():
    def build(H, rate=1.0, sigma=1.0):
        return ModelSpec(make_drift("linear", rate=rate), [[sigma]], H)
    return build


def zscore(est, exact):
    return abs(est.value - exact) / max(est.stderr, 1e-300)


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """record(n, ok, detail) stores one pass/fail line for the summary."""
    def _record(n, ok, detail=""):
        ACCEPTANCE_LINES.append(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
