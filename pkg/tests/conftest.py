import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ngmeet.cube import HsiCube

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_cube(rng, M, N, B, scale=1.0):
    return HsiCube(scale * rng.standard_normal((B, M, N)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


def record_criterion(number, passed, detail):
    """Store (and print) the one-line verdict of an acceptance criterion."""
    status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    line = f"criterion {number}: {status} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=str):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
