"""Visual servoing controllers for the wrist and the episode simulator.

Two controllers share one feature pipeline (render -> merge -> select ->
normalised centroid):

* ``sibvs_step``: joint-space IBVS over both joints,
  ``qdot = -lambda * pinv(L_s @ cVe @ eJe(q)) @ (s - s*)``.
* ``ppibvs_step``: the same law restricted to flexion-extension, while
  pronation-supination follows a proportional law whose direction depends
  only on which side of the image centre the target lies.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose, inverse, pseudo_inverse, velocity_transform
from .vision import (
    CameraIntrinsics,
    FeaturePoint,
    NonPositiveDepth,
    NothingVisible,
    SceneObject,
    merge_object_mask,
    render_part_masks,
    select_nearest_to_center,
    to_feature,
)
from .wrist import (
    WFE,
    WPS,
    JointState,
    JointVelocity,
    WristParams,
    camera_world_pose,
    check_limits,
    clamp,
    joint_jacobian,
    palm_normal_world,
)


class Controller(str, enum.Enum):
    SIBVS = "s-IBVS"
    PPIBVS = "pp-IBVS"


class Handedness(str, enum.Enum):
    RIGHT_ARM = "RightArm"
    LEFT_ARM = "LeftArm"


@dataclass(frozen=True)
class ControllerConfig:
    lam: float = 0.8
    lambda_wps: float = 0.4
    convergence_eps: float = 0.01
    convergence_hold: int = 5
    max_iterations: int = 1500
    dt: float = 1.0 / 15.0
    damping: float = 0.0
    pinv_tolerance: float = 1e-10
    handedness: Handedness = Handedness.RIGHT_ARM
    adjacency_px: float = 3.0

    def __post_init__(self):
        if self.lam <= 0 or self.lambda_wps <= 0:
            raise ValueError("gains must be positive")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.max_iterations < 1 or self.convergence_hold < 1:
            raise ValueError("max_iterations and convergence_hold must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "handedness", Handedness(self.handedness))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["handedness"] = self.handedness.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


def interaction_matrix_point(f: FeaturePoint) -> np.ndarray:
    """2x6 interaction matrix of a normalised image point at depth Z."""
    x, y, Z = f.x, f.y, f.depth
    if not Z > 0:
        raise NonPositiveDepth("depth must be positive")
    return np.array([
        [-1.0 / Z, 0.0, x / Z, x * y, -(1.0 + x * x), y],
        [0.0, -1.0 / Z, y / Z, 1.0 + y * y, -x * y, -x],
    ])


def feature_jacobian(f: FeaturePoint, q: JointState, params: WristParams, joints=(WFE, WPS)) -> np.ndarray:
    """L_s @ cVe @ eJe(q) for the selected joints (2 x n)."""
    cVe = velocity_transform(inverse(params.effector_to_camera()))
    return interaction_matrix_point(f) @ cVe @ joint_jacobian(params, q, joints)


def _error(f: FeaturePoint, target: FeaturePoint) -> np.ndarray:
    return np.array([f.x - target.x, f.y - target.y])


def sibvs_step(f: FeaturePoint, target: FeaturePoint, q: JointState,
               params: WristParams, cfg: ControllerConfig) -> JointVelocity:
    check_limits(params, q)
    e = _error(f, target)
    J = feature_jacobian(f, q, params)
    qdot = -cfg.lam * pseudo_inverse(J, cfg.pinv_tolerance, cfg.damping) @ e
    return JointVelocity.from_array(qdot)


def wps_direction(centroid_u: float, intrinsics: CameraIntrinsics, handedness: Handedness) -> float:
    """+1/-1 from the side of the vertical centre line the target is on (0 on it)."""
    side = np.sign(intrinsics.cx - centroid_u)
    return float(side if handedness is Handedness.RIGHT_ARM else -side)


def ppibvs_step(f: FeaturePoint, target: FeaturePoint, q: JointState, params: WristParams,
                cfg: ControllerConfig, centroid_px, intrinsics: CameraIntrinsics) -> JointVelocity:
    check_limits(params, q)
    e = _error(f, target)
    J = feature_jacobian(f, q, params, joints=(WFE,))
    qdot_wfe = float(-cfg.lam * (pseudo_inverse(J, cfg.pinv_tolerance, cfg.damping) @ e)[0])
    # horizontal offset between image centre and centroid, in normalised units
    e_wps = (intrinsics.cx - float(centroid_px[0])) / intrinsics.fx
    qdot_wps = wps_direction(centroid_px[0], intrinsics, cfg.handedness) * cfg.lambda_wps * abs(e_wps)
    return JointVelocity(qdot_wfe, qdot_wps)


def naturalness(params: WristParams, q_final: JointState, hand_pose: Pose, object_centroid_world,
                threshold: float = math.pi / 2, forearm_relative: bool = True) -> bool:
    """Whether the palm faces the object.

    True iff the angle between the palm normal and the wrist->object direction
    is below ``threshold``. With ``forearm_relative`` both vectors are first
    projected onto the plane orthogonal to the forearm (pronation) axis, so
    the test reads the pronation-supination state rather than the camera
    tilt, which is rigid with the palm.
    """
    n = hand_pose.rotation @ palm_normal_world(params, q_final)
    d = np.asarray(object_centroid_world, dtype=float) - hand_pose.translation
    if forearm_relative:
        axis = hand_pose.rotation[:, 2]
        n = n - axis * (n @ axis)
        d = d - axis * (d @ axis)
    nn, nd = np.linalg.norm(n), np.linalg.norm(d)
    if nn < 1e-12 or nd < 1e-12:
        return False
    return bool((n @ d) / (nn * nd) > math.cos(threshold))


@dataclass
class EpisodeResult:
    controller: str
    converged: bool
    iterations: int
    final_error_norm: float
    natural: bool
    trajectory: list = field(default_factory=list)  # (JointState, FeaturePoint) per observation
    saturated: bool = False
    lost: bool = False
    final_q: Optional[JointState] = None

    def error_norms(self) -> np.ndarray:
        return np.array([math.hypot(f.x, f.y) for _, f in self.trajectory])

    def to_dict(self, include_trajectory: bool = True) -> dict:
        d = {
            "controller": self.controller,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_error_norm": self.final_error_norm,
            "natural": self.natural,
            "saturated": self.saturated,
            "lost": self.lost,
            "final_q_deg": None if self.final_q is None
            else [math.degrees(self.final_q.q_wfe), math.degrees(self.final_q.q_wps)],
        }
        if include_trajectory:
            d["trajectory"] = [
                {"q_wfe": q.q_wfe, "q_wps": q.q_wps, "x": f.x, "y": f.y, "depth": f.depth}
                for q, f in self.trajectory
            ]
        return d

    def to_json(self, include_trajectory: bool = True) -> str:
        return json.dumps(self.to_dict(include_trajectory), indent=2)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "q_wfe", "q_wps", "x", "y", "error_norm"])
        for i, (q, f) in enumerate(self.trajectory):
            w.writerow([i, repr(q.q_wfe), repr(q.q_wps), repr(f.x), repr(f.y), repr(math.hypot(f.x, f.y))])
        return buf.getvalue()


def observe(scene: SceneObject, hand_pose: Pose, q: JointState, params: WristParams,
            intrinsics: CameraIntrinsics, adjacency_px: float = 3.0):
    """Render, merge, select. Returns (selected region, feature)."""
    masks = render_part_masks(intrinsics, camera_world_pose(hand_pose, params, q), scene)
    region = select_nearest_to_center(merge_object_mask(masks, adjacency_px), intrinsics)
    return region, to_feature(intrinsics, region.centroid, region.mean_depth)


def controller_step(controller: Controller, f: FeaturePoint, q: JointState, params: WristParams,
                    cfg: ControllerConfig, centroid_px, intrinsics: CameraIntrinsics) -> JointVelocity:
    target = FeaturePoint(0.0, 0.0, f.depth)
    if Controller(controller) is Controller.SIBVS:
        return sibvs_step(f, target, q, params, cfg)
    return ppibvs_step(f, target, q, params, cfg, centroid_px, intrinsics)


def simulate_episode(controller, scene: SceneObject, hand_pose: Pose, q0: JointState,
                     params: WristParams, intrinsics: CameraIntrinsics, cfg: ControllerConfig) -> EpisodeResult:
    """Servo the wrist with the forearm held still until the selected region
    stays centred for ``convergence_hold`` observations.

    Raises NothingVisible if the object is out of view at the start. Losing
    the object later ends the episode unconverged with ``lost`` set.
    """
    controller = Controller(controller)
    check_limits(params, q0)
    q = q0.array()
    traj = []
    hold = 0
    saturated = lost = converged = False
    steps = 0
    f = None
    while True:
        qs = JointState.from_array(q)
        try:
            region, f = observe(scene, hand_pose, qs, params, intrinsics, cfg.adjacency_px)
        except NothingVisible:
            if steps == 0:
                raise
            lost = True
            break
        traj.append((qs, f))
        hold = hold + 1 if math.hypot(f.x, f.y) < cfg.convergence_eps else 0
        if hold >= cfg.convergence_hold:
            converged = True
            break
        if steps >= cfg.max_iterations:
            break
        qdot = controller_step(controller, f, qs, params, cfg, region.centroid, intrinsics).array()
        q, sat = clamp(params, q + qdot * cfg.dt)
        saturated |= bool(sat.any())
        steps += 1

    if lost:
        steps = len(traj) - 1
    q_final = JointState.from_array(q) if not lost else traj[-1][0]
    err = math.hypot(f.x, f.y) if f is not None else math.inf
    return EpisodeResult(
        controller=controller.value,
        converged=converged,
        iterations=steps,
        final_error_norm=err,
        natural=naturalness(params, q_final, hand_pose, scene.centroid_world()),
        trajectory=traj,
        saturated=saturated,
        lost=lost,
        final_q=q_final,
    )
