import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
)
settings.register_profile("ci", settings(max_examples=15, deadline=None, derandomize=True))
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion and print it."""

    def record(number: int, name: str, ok: bool, detail: str):
        line = f"[{number:2d}] {'PASS' if ok else 'FAIL'} {name}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
