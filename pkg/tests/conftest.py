import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from wristservo.annotation import Displacement
from wristservo.bench import look_rotation
from wristservo.geometry import Pose, axis_angle, compose, inverse

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def poses(draw, max_t=1.0):
    axis = draw(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
    angle = draw(st.floats(-math.pi, math.pi))
    t = draw(st.lists(st.floats(-max_t, max_t), min_size=3, max_size=3))
    return Pose(axis_angle(np.array(axis), angle), np.array(t))


def random_pose(rng, max_t=1.0):
    axis = rng.normal(size=3)
    return Pose(axis_angle(axis, rng.uniform(-math.pi, math.pi)), rng.uniform(-max_t, max_t, 3))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def orbit(n, seed=0):
    """Ground-truth T_{c^k,o} for a camera circling the bottle and looking at it."""
    rng = np.random.default_rng(seed)
    target = np.array([0.0, 0.0, 0.08])
    out = []
    for k in range(n):
        az = 0.15 * k + 0.02 * rng.normal()
        el = math.radians(30) + 0.1 * math.sin(0.3 * k)
        r = 0.45 + 0.05 * math.cos(0.2 * k)
        p = target + r * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        world_cam = Pose(look_rotation(target - p, rng.uniform(-0.2, 0.2)), p)
        out.append(inverse(world_cam))
    return out


def displacements_from(truth):
    # T_{c^{k-1},c^k} = T_{c^{k-1},o} T_{c^k,o}^{-1}
    return tuple(Displacement(k + 1, compose(truth[k - 1], inverse(truth[k])), k)
                 for k in range(1, len(truth)))


def pose_err(a: Pose, b: Pose) -> float:
    return max(np.abs(a.rotation - b.rotation).max(), np.abs(a.translation - b.translation).max())


def same_masks(a, b) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if x.label != y.label:
            return False
        px = sorted(map(tuple, x.pixels.tolist()))
        py = sorted(map(tuple, y.pixels.tolist()))
        if px != py:
            return False
    return True
