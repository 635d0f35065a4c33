import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wristservo.geometry import Pose, axis_angle, compose
from wristservo.wrist import (
    WFE,
    WPS,
    JointLimitViolation,
    JointState,
    WristParams,
    clamp,
    forward_kinematics,
    joint_jacobian,
    load_wrist_params,
    palm_normal_world,
)

P = WristParams()
wfe_in = st.floats(math.radians(-45), math.radians(75))
wps_in = st.floats(-math.pi, math.pi)


def fd_jacobian(params, q, h=1e-6):
    """Central differences of the hand pose, as a body twist per joint."""
    from wristservo.wrist import effector_pose
    T = effector_pose(params, q).matrix()
    Tinv = np.linalg.inv(T)
    cols = []
    for j in range(2):
        dq = np.zeros(2)
        dq[j] = h
        Tp = effector_pose(params, JointState.from_array(q.array() + dq)).matrix()
        Tm = effector_pose(params, JointState.from_array(q.array() - dq)).matrix()
        xi = Tinv @ (Tp - Tm) / (2 * h)
        cols.append(np.concatenate([xi[:3, 3], [xi[2, 1], xi[0, 2], xi[1, 0]]]))
    return np.column_stack(cols)


def test_zero_config_tilt():
    T = forward_kinematics(P, JointState(0, 0))
    optical = T.rotation[:, 2]
    assert math.degrees(math.acos(optical @ [0, 0, 1])) == pytest.approx(16.0, abs=1e-9)
    # tilted towards the palm side (-y of the hand)
    assert optical[1] < 0
    assert np.allclose(T.translation, P.camera_offset)


def test_full_turn_periodic():
    free = P.unlimited()
    a = forward_kinematics(free, JointState(0.3, 0.0))
    b = forward_kinematics(free, JointState(0.3, 2 * math.pi))
    assert a.allclose(b, 1e-12)


def test_flexion_is_rotation_about_wfe_axis():
    T0 = forward_kinematics(P, JointState(0, 0))
    T = forward_kinematics(P, JointState(math.radians(10), 0))
    expected = compose(Pose(axis_angle([1, 0, 0], math.radians(10)), np.zeros(3)), T0)
    assert T.allclose(expected, 1e-12)


def test_limits_enforced():
    with pytest.raises(JointLimitViolation):
        forward_kinematics(P, JointState(math.radians(80), 0))
    with pytest.raises(JointLimitViolation):
        joint_jacobian(P, JointState(0, 4.0))


def test_jacobian_structure():
    q = JointState(0.4, -1.1)
    J = joint_jacobian(P, q)
    assert J.shape == (6, 2)
    assert np.allclose(J[:3], 0)  # both axes pass through the hand origin
    assert np.allclose(np.linalg.norm(J[3:], axis=0), 1)
    assert np.allclose(joint_jacobian(P, q, (WFE,)), J[:, :1])
    assert np.allclose(joint_jacobian(P, q, (WPS,)), J[:, 1:])
    with pytest.raises(ValueError):
        joint_jacobian(P, q, ())


def test_axes_orthogonal_at_zero():
    J = joint_jacobian(P, JointState(0, 0))
    assert abs(J[3:, 0] @ J[3:, 1]) < 1e-9


@given(wfe_in, wps_in)
def test_jacobian_matches_fd(a, b):
    q = JointState(a, b)
    assert np.abs(joint_jacobian(P.unlimited(), q) - fd_jacobian(P.unlimited(), q)).max() < 1e-6


def test_palm_normal_examples():
    n0 = palm_normal_world(P, JointState(0, 0))
    assert np.allclose(n0, P.palm_normal_local)
    n180 = palm_normal_world(P, JointState(0.3, math.pi))
    n_0 = palm_normal_world(P, JointState(0.3, 0.0))
    assert np.allclose(n180[:2], -n_0[:2]) and n180[2] == pytest.approx(n_0[2])
    q = JointState.from_degrees(20, 45)
    R = compose(forward_kinematics(P, q), P.effector_to_camera().inverse()).rotation
    assert np.allclose(palm_normal_world(P, q), R @ np.array(P.palm_normal_local))


def test_params_validation():
    with pytest.raises(ValueError):
        WristParams(camera_tilt=0.0)
    with pytest.raises(ValueError):
        WristParams(wfe_limits=(1.0, 0.0))
    with pytest.raises(ValueError):
        WristParams(palm_normal_local=(0, 0, 2))


def test_clamp_and_wrap():
    q, sat = clamp(P, np.array([math.radians(90), 0.0]))
    assert q[0] == pytest.approx(math.radians(75)) and sat.tolist() == [True, False]
    # a full-turn WPS range wraps instead of stopping
    q, sat = clamp(P, np.array([0.0, math.pi + 0.1]))
    assert q[1] == pytest.approx(-math.pi + 0.1) and not sat.any()
    narrow = WristParams(wps_limits=(-math.pi / 2, math.pi / 2))
    q, sat = clamp(narrow, np.array([0.0, 2.0]))
    assert q[1] == pytest.approx(math.pi / 2) and sat[1]


def test_config_files(tmp_path):
    d = {"wrist": {"camera_tilt": 20, "wfe_limits": [-30, 60], "camera_offset": [0, -0.01, 0.05]}}
    (tmp_path / "w.json").write_text(json.dumps(d))
    (tmp_path / "w.toml").write_text('[wrist]\ncamera_tilt = 20\nwfe_limits = [-30, 60]\ncamera_offset = [0, -0.01, 0.05]\n')
    for name in ("w.json", "w.toml"):
        p = load_wrist_params(tmp_path / name)
        assert p.camera_tilt == pytest.approx(math.radians(20))
        assert p.wfe_limits == pytest.approx((math.radians(-30), math.radians(60)))
    assert WristParams.from_dict(P.to_dict()) == P
