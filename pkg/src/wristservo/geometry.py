"""Rigid-body substrate: SE(3) poses, twists, the 6x6 motion transform and
the pseudo-inverse used by the controllers.

Convention: ``Pose`` T_{a,b} maps coordinates expressed in frame ``b`` into
frame ``a``; twists are stacked linear-first ``(vx, vy, vz, wx, wy, wz)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ORTHO_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (cheaper than np.cross for single pairs)."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _freeze(self.rotation)
        t = _freeze(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("pose entries must be finite")
        det = R[:, 0] @ cross3(R[:, 1], R[:, 2])
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL * 10 or abs(det - 1.0) > ORTHO_TOL * 10:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "Pose":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), np.asarray(t, dtype=float))

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (3,) or (N, 3) from the source frame to the target frame."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        return inverse(self)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        R = np.asarray(d["rotation"], dtype=float)
        if R.shape == (9,):
            R = R.reshape(3, 3)
        return cls(R, np.asarray(d["translation"], dtype=float))

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class Twist:
    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        lin = _freeze(self.linear).reshape(3)
        ang = _freeze(self.angular).reshape(3)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(ang))):
            raise ValueError("twist entries must be finite")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "angular", ang)

    @classmethod
    def from_vector(cls, v) -> "Twist":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -Rt @ p.translation)


def chain_displacements(initial: Pose, displacements: Sequence[Pose]) -> list[Pose]:
    """Propagate a camera-to-object pose through frame-to-frame camera motion.

    ``displacements[i]`` is the pose of camera ``i+2`` expressed in camera
    ``i+1``. Returns ``[T_{c^1,o}, T_{c^2,o}, ...]`` with
    ``T_{c^k,o} = (T_{c^1,c^2} ... T_{c^{k-1},c^k})^-1 T_{c^1,o}``.
    The running product is re-orthonormalized every step so long chains
    stay on SO(3).
    """
    out = [initial]
    R = np.eye(3)
    t = np.zeros(3)
    for d in displacements:
        t = R @ d.translation + t
        R = orthonormalize(R @ d.rotation)
        Rt = R.T
        out.append(Pose(Rt @ initial.rotation, Rt @ (initial.translation - t)))
    return out


def velocity_transform(camera_from_effector: Pose) -> np.ndarray:
    """6x6 matrix mapping effector-frame twists to camera-frame twists.

    ``camera_from_effector`` is T_{c,e}; the result is
    ``[[R, [t]x R], [0, R]]``.
    """
    R = camera_from_effector.rotation
    t = camera_from_effector.translation
    V = np.zeros((6, 6))
    V[:3, :3] = R
    V[:3, 3:] = skew(t) @ R
    V[3:, 3:] = R
    return V


def pseudo_inverse(m: np.ndarray, tolerance: float = 1e-10, damping: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudo-inverse by SVD.

    Singular values below ``tolerance * sigma_max`` are truncated. With
    ``damping > 0`` the retained values are inverted as s / (s^2 + damping^2)
    (damped least squares).
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    U, s, Vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[1], m.shape[0]))
    keep = s > tolerance * s[0]
    inv = np.zeros_like(s)
    if damping > 0:
        inv[keep] = s[keep] / (s[keep] ** 2 + damping**2)
    else:
        inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def poses_to_json(poses: Iterable[Pose]) -> list[dict]:
    return [p.to_dict() for p in poses]
