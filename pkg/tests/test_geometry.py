import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import poses, random_pose
from wristservo.geometry import (
    Pose,
    Twist,
    axis_angle,
    chain_displacements,
    compose,
    inverse,
    orthonormalize,
    pseudo_inverse,
    rot_z,
    skew,
    velocity_transform,
)


def hom(p: Pose) -> np.ndarray:
    return p.matrix()


def test_compose_identity_and_inverse(rng):
    T = random_pose(rng)
    assert compose(Pose.identity(), T).allclose(T)
    assert compose(T, inverse(T)).allclose(Pose.identity())


def test_compose_hand_multiplied():
    a = Pose(rot_z(math.pi / 2), [1, 0, 0])
    b = Pose(rot_z(math.pi / 2), [0, 0, 0])
    expected = np.array([[-1, 0, 0, 1], [0, -1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    assert np.allclose(compose(a, b).matrix(), expected, atol=1e-12)


def test_inverse_examples():
    assert inverse(Pose.identity()).allclose(Pose.identity())
    assert inverse(Pose.from_translation([1, -2, 3])).allclose(Pose.from_translation([-1, 2, -3]))
    p = Pose(rot_z(math.radians(30)), [0.1, 0.2, 0.3])
    assert np.allclose(inverse(p).matrix(), np.linalg.inv(p.matrix()), atol=1e-12)


def test_pose_rejects_bad_rotation():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Pose(np.eye(3) * 1.01, np.zeros(3))
    with pytest.raises(ValueError):
        Pose(np.eye(3), [np.nan, 0, 0])


def test_pose_json_roundtrip(rng):
    p = random_pose(rng)
    d = p.to_dict()
    assert len(d["rotation"]) == 3 and len(d["translation"]) == 3
    assert Pose.from_dict(d).allclose(p, 0)
    flat = {"rotation": np.asarray(d["rotation"]).ravel().tolist(), "translation": d["translation"]}
    assert Pose.from_dict(flat).allclose(p, 0)


@given(poses(), poses(), poses())
def test_compose_associative(a, b, c):
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), 1e-9)


@given(poses())
def test_inverse_matches_matrix_inverse(p):
    assert np.allclose(inverse(p).matrix(), np.linalg.inv(p.matrix()), atol=1e-9)


def test_chain_examples(rng):
    T0 = random_pose(rng)
    assert [x.allclose(T0, 0) for x in chain_displacements(T0, [])] == [True]
    out = chain_displacements(T0, [Pose.identity(), Pose.identity()])
    assert len(out) == 3 and all(x.allclose(T0, 1e-12) for x in out)
    D1, D2 = random_pose(rng), random_pose(rng)
    third = chain_displacements(T0, [D1, D2])[2]
    oracle = np.linalg.inv(D1.matrix() @ D2.matrix()) @ T0.matrix()
    assert np.allclose(third.matrix(), oracle, atol=1e-12)


@given(poses(), st.lists(poses(max_t=0.2), min_size=1, max_size=12))
def test_chain_roundtrip(T0, ds):
    out = chain_displacements(T0, ds)
    for i, d in enumerate(ds):
        # T_{c^i,c^{i+1}} = T_{c^i,o} T_{c^{i+1},o}^-1
        rec = compose(out[i], inverse(out[i + 1]))
        assert rec.allclose(d, 1e-8)


def test_chain_drift_long(rng):
    ds = [random_pose(rng, 0.05) for _ in range(1000)]
    out = chain_displacements(Pose.identity(), ds)
    R = out[-1].rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-8
    assert abs(np.linalg.det(R) - 1) < 1e-8


def test_velocity_transform_blocks(rng):
    assert np.allclose(velocity_transform(Pose.identity()), np.eye(6))
    R = random_pose(rng).rotation
    V = velocity_transform(Pose(R, np.zeros(3)))
    assert np.allclose(V, np.block([[R, np.zeros((3, 3))], [np.zeros((3, 3)), R]]))


def test_velocity_transform_matches_transported_motion(rng):
    # Move frame e by a small twist (expressed in e) and observe how frame c,
    # rigidly attached, moves; its twist in c must equal V @ v.
    T_ce = random_pose(rng, 0.3)
    T_ec = inverse(T_ce)
    v = rng.normal(size=6)
    h = 1e-6

    def moved(s):
        w = v[3:] * s
        th = np.linalg.norm(w)
        R = axis_angle(w, th) if th > 0 else np.eye(3)
        return compose(Pose(R, v[:3] * s), T_ec)  # new camera pose expressed in the old e frame

    plus, minus = moved(h), moved(-h)
    # camera-frame twist: T_c^-1 dT_c, expressed in c
    dT = (plus.matrix() - minus.matrix()) / (2 * h)
    xi = np.linalg.inv(T_ec.matrix()) @ dT
    numeric = np.concatenate([xi[:3, 3], [xi[2, 1], xi[0, 2], xi[1, 0]]])
    assert np.allclose(velocity_transform(T_ce) @ v, numeric, atol=1e-6)


@given(poses())
def test_velocity_transform_inverse(p):
    assert np.allclose(velocity_transform(p) @ velocity_transform(inverse(p)), np.eye(6), atol=1e-8)


def test_pinv_examples():
    assert np.allclose(pseudo_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    assert np.allclose(pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    with pytest.raises(ValueError):
        pseudo_inverse(np.eye(2), tolerance=0)


@pytest.mark.parametrize("shape", [(2, 1), (2, 2), (2, 6), (6, 2)])
def test_pinv_penrose(shape, rng):
    for _ in range(250):
        M = rng.normal(size=shape)
        if rng.random() < 0.2 and min(shape) > 1:
            M[:, 0] = M[:, 1]  # rank deficient
        P = pseudo_inverse(M)
        assert np.allclose(M @ P @ M, M, atol=1e-8)
        assert np.allclose(P @ M @ P, P, atol=1e-8)
        assert np.allclose((M @ P).T, M @ P, atol=1e-8)
        assert np.allclose((P @ M).T, P @ M, atol=1e-8)
        assert np.allclose(P, np.linalg.pinv(M, rcond=1e-10), atol=1e-8)


def test_pinv_damped_shrinks():
    M = np.diag([1.0, 1e-3])
    P = pseudo_inverse(M, damping=0.01)
    assert P[1, 1] == pytest.approx(1e-3 / (1e-6 + 1e-4))
    assert abs(P[1, 1]) < 1e3


def test_orthonormalize_projects(rng):
    R = random_pose(rng).rotation + 1e-4 * rng.normal(size=(3, 3))
    Q = orthonormalize(R)
    assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-12) and np.linalg.det(Q) > 0


def test_twist_vector_order():
    t = Twist.from_vector([1, 2, 3, 4, 5, 6])
    assert t.linear.tolist() == [1, 2, 3] and t.angular.tolist() == [4, 5, 6]
    assert t.vector().tolist() == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ValueError):
        Twist([np.inf, 0, 0], [0, 0, 0])


def test_skew_cross(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(skew(a) @ b, np.cross(a, b))
