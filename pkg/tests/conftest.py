import math

import pytest
from hypothesis import HealthCheck, settings

from slip_lab.flight import ApexState, descend
from slip_lab.model import SystemParams

settings.register_profile(
    "slip", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("slip")


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def touchdown(params):
    """A generic forward-running touchdown."""
    return descend(ApexState(0.35, 2.0), math.radians(20.0), params)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
