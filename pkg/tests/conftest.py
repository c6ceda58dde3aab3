import math

import numpy as np
import pytest

from prosim.mobility import KMH, VehicleState


def vehicle(id, x, y, vx=0.0, vy=0.0, sigma=1.0, segment=0):
    """A vehicle at ``(x, y)`` with velocity ``(vx, vy)``."""
    speed = math.hypot(vx, vy)
    heading = (vx / speed, vy / speed) if speed > 0 else (1.0, 0.0)
    return VehicleState(id, (float(x), float(y)), segment, heading, speed, sigma)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


V_MIN = 30 * KMH
V_MAX = 60 * KMH


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
