import math

import pytest
from hypothesis import HealthCheck, settings

from cuspidal.model import ILLUSTRATIVE, orthogonal_params, validate_params

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def illustrative():
    return validate_params(ILLUSTRATIVE)


@pytest.fixture(scope="session")
def noncuspidal():
    # same chain with a short last link, well below C1
    return validate_params(orthogonal_params(1.0, 2.0, 0.1, 1.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def wrapped(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi
