import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from civcal.geometry import RigidTransform, transform_from_pose

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
angles = st.floats(-179.9, 179.9, allow_nan=False)
points3 = st.tuples(finite, finite, finite).map(np.array)


@st.composite
def transforms(draw):
    yaw, roll = draw(angles), draw(angles)
    pitch = draw(st.floats(-89, 89, allow_nan=False))
    x, y, z = draw(finite), draw(finite), draw(finite)
    return transform_from_pose(yaw, pitch, roll, x, y, z)


def random_transform(rng) -> RigidTransform:
    return transform_from_pose(rng.uniform(-180, 180), rng.uniform(-89, 89), rng.uniform(-180, 180),
                               *rng.uniform(-50, 50, 3))


def l_points(length=4.0, width=2.0, n_long=40, n_short=20, angle=0.0, offset=(0.0, 0.0), sigma=0.0, rng=None):
    """Two legs meeting at a corner: long leg along +x, short leg along +y, then rotated.

    Returns points and generating-leg labels (0 long, 1 short).
    """
    a = np.column_stack([np.linspace(0, length, n_long), np.zeros(n_long)])
    b = np.column_stack([np.zeros(n_short), np.linspace(0, width, n_short)])
    pts = np.vstack([a, b])
    c, s = math.cos(angle), math.sin(angle)
    pts = pts @ np.array([[c, s], [-s, c]]) + np.asarray(offset)
    if sigma > 0:
        pts = pts + rng.normal(0, sigma, pts.shape)
    return pts, np.r_[np.zeros(n_long, int), np.ones(n_short, int)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance bookkeeping: one line per criterion in the terminal summary
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str):
        CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
