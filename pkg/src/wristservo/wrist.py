"""Kinematics of a two-joint prosthetic wrist with a tilted palm camera.

Frames
------
base (B)      forearm frame at the wrist point; +z runs distally along the
              forearm and is the pronation-supination (WPS) axis.
effector (E)  hand frame at the same point, after WPS then flexion-extension
              (WFE) about the hand's x axis. Flexion is positive.
camera (C)    optical frame (x right, y down, z forward) mounted at
              ``camera_offset`` in E, optical axis tilted by ``camera_tilt``
              from the hand's long axis towards the palm (-y of E).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import Pose, compose, cross3, rot_x, rot_z

WFE, WPS = 0, 1
JOINT_NAMES = ("wfe", "wps")


class JointLimitViolation(ValueError):
    pass


@dataclass(frozen=True)
class JointState:
    q_wfe: float
    q_wps: float

    def array(self) -> np.ndarray:
        return np.array([self.q_wfe, self.q_wps])

    @classmethod
    def from_array(cls, a) -> "JointState":
        return cls(float(a[0]), float(a[1]))

    @classmethod
    def from_degrees(cls, wfe: float, wps: float) -> "JointState":
        return cls(math.radians(wfe), math.radians(wps))


@dataclass(frozen=True)
class JointVelocity:
    qdot_wfe: float
    qdot_wps: float

    def array(self) -> np.ndarray:
        return np.array([self.qdot_wfe, self.qdot_wps])

    @classmethod
    def from_array(cls, a) -> "JointVelocity":
        return cls(float(a[0]), float(a[1]))


def _unit(v) -> tuple:
    v = np.asarray(v, dtype=float)
    return tuple((v / np.linalg.norm(v)).tolist())


@dataclass(frozen=True)
class WristParams:
    camera_tilt: float = math.radians(16.0)
    camera_offset: tuple = (0.0, -0.02, 0.06)
    wfe_limits: tuple = (math.radians(-45.0), math.radians(75.0))
    wps_limits: tuple = (-math.pi, math.pi)
    # back of the hand is +y in E, so the palm faces -y
    palm_normal_local: tuple = (0.0, -1.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.camera_tilt < math.pi / 2:
            raise ValueError("camera_tilt must lie in (0, pi/2)")
        for name in ("wfe_limits", "wps_limits"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: min must be < max")
        n = np.asarray(self.palm_normal_local, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("palm_normal_local must be a unit vector")
        object.__setattr__(self, "camera_offset", tuple(float(x) for x in self.camera_offset))
        object.__setattr__(self, "palm_normal_local", tuple(float(x) for x in n))

    @property
    def limits(self) -> np.ndarray:
        return np.array([self.wfe_limits, self.wps_limits], dtype=float)

    def continuous_mask(self) -> np.ndarray:
        lim = self.limits
        return np.isfinite(lim).all(axis=1) & (lim[:, 1] - lim[:, 0] >= 2 * math.pi - 1e-12)

    def unlimited(self) -> "WristParams":
        return replace(self, wfe_limits=(-math.inf, math.inf), wps_limits=(-math.inf, math.inf))

    def effector_to_camera(self) -> Pose:
        """T_{e,c}: camera frame expressed in the hand frame."""
        R = rot_x(self.camera_tilt) @ rot_z(math.pi)
        return Pose(R, np.asarray(self.camera_offset))

    def to_dict(self) -> dict:
        """Config form (angles in degrees)."""
        return {
            "camera_tilt": math.degrees(self.camera_tilt),
            "camera_offset": list(self.camera_offset),
            "wfe_limits": [math.degrees(x) for x in self.wfe_limits],
            "wps_limits": [math.degrees(x) for x in self.wps_limits],
            "palm_normal_local": list(self.palm_normal_local),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WristParams":
        kw = {}
        if "camera_tilt" in d:
            kw["camera_tilt"] = math.radians(d["camera_tilt"])
        if "camera_offset" in d:
            kw["camera_offset"] = tuple(d["camera_offset"])
        for name in ("wfe_limits", "wps_limits"):
            if name in d:
                kw[name] = tuple(math.radians(x) for x in d[name])
        if "palm_normal_local" in d:
            kw["palm_normal_local"] = _unit(d["palm_normal_local"])
        return cls(**kw)


def load_wrist_params(path) -> WristParams:
    """Read WristParams from a JSON or TOML file (degrees). A ``[wrist]``
    table / ``"wrist"`` key is used when present."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    return WristParams.from_dict(data.get("wrist", data))


def check_limits(params: WristParams, q: JointState) -> None:
    for name, val, (lo, hi) in zip(JOINT_NAMES, (q.q_wfe, q.q_wps), params.limits):
        if not lo - 1e-12 <= val <= hi + 1e-12:
            raise JointLimitViolation(
                f"{name}={math.degrees(val):.3f} deg outside [{math.degrees(lo):.1f}, {math.degrees(hi):.1f}]"
            )


def effector_pose(params: WristParams, q: JointState) -> Pose:
    """T_{b,e}: hand frame in the forearm frame."""
    check_limits(params, q)
    return Pose(rot_z(q.q_wps) @ rot_x(q.q_wfe), np.zeros(3))


def forward_kinematics(params: WristParams, q: JointState) -> Pose:
    """T_{b,c}: camera frame in the forearm frame."""
    return compose(effector_pose(params, q), params.effector_to_camera())


def _joint_screws(q: JointState) -> list[tuple[np.ndarray, np.ndarray]]:
    """(axis, point-on-axis) of each joint in the base frame, ordered (WFE, WPS)."""
    wps_axis = np.array([0.0, 0.0, 1.0])
    wfe_axis = rot_z(q.q_wps) @ np.array([1.0, 0.0, 0.0])
    origin = np.zeros(3)
    return [(wfe_axis, origin), (wps_axis, origin)]


def joint_jacobian(params: WristParams, q: JointState, joints=(WFE, WPS)) -> np.ndarray:
    """Effector-frame Jacobian (6 x len(joints)), linear rows first.

    Each column is the twist of the hand frame, expressed in the hand frame,
    produced by unit velocity of the selected joint.
    """
    joints = tuple(joints)
    if not joints:
        raise ValueError("joint selector must be non-empty")
    T = effector_pose(params, q)
    Rt = T.rotation.T
    screws = _joint_screws(q)
    J = np.zeros((6, len(joints)))
    for col, j in enumerate(joints):
        axis, point = screws[j]
        J[:3, col] = Rt @ cross3(axis, T.translation - point)
        J[3:, col] = Rt @ axis
    return J


def palm_normal_world(params: WristParams, q: JointState) -> np.ndarray:
    """Palm normal expressed in the forearm frame."""
    R = effector_pose(params, q).rotation
    return R @ np.asarray(params.palm_normal_local)


def camera_world_pose(hand_pose: Pose, params: WristParams, q: JointState) -> Pose:
    """T_{w,c} given the forearm pose T_{w,b}."""
    return compose(hand_pose, forward_kinematics(params, q))


def clamp(params: WristParams, qvec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bring joint positions back into range; returns (positions, saturated-mask).

    A joint whose range covers a full turn has no stop inside it (its two
    ends are the same hand orientation), so it wraps. Other joints clip.
    """
    lim = params.limits
    out = np.clip(qvec, lim[:, 0], lim[:, 1])
    saturated = out != qvec
    for j in np.flatnonzero(params.continuous_mask()):
        lo = lim[j, 0]
        out[j] = lo + (qvec[j] - lo) % (2 * math.pi)
        saturated[j] = False
    return out, saturated
