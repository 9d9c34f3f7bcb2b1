import math

import numpy as np
import pytest
from hypothesis import settings

from flexform.dynamics import ActuationType, ManipulatorConfig
from flexform.scenarios import REFERENCE_PARAMS, REFERENCE_STIFFNESS

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def make_arm(actuation=ActuationType.FA, base=(0.0, 0.0), beta=0.0, stiffness=REFERENCE_STIFFNESS):
    return ManipulatorConfig(REFERENCE_PARAMS, stiffness, actuation, base, beta)


@pytest.fixture
def arm():
    return make_arm()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


angles = dict(min_value=-2 * math.pi, max_value=2 * math.pi, allow_nan=False)
rates = dict(min_value=-10.0, max_value=10.0, allow_nan=False)

# filled by tests/test_acceptance.py, echoed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
