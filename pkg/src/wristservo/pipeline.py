"""Shared-autonomy grasp pipeline: a phase machine driven by trigger events
and per-tick mask observations.

The machine is pure. ``step`` maps (state, event or tick, masks, joints) to a
new state plus one command, so any event log replays to the same command
stream. ``run_session`` closes the loop against the simulator.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from .geometry import Pose
from .servo import Controller, ControllerConfig, controller_step
from .vision import (
    CameraIntrinsics,
    NothingVisible,
    PartLabel,
    PartMask,
    SceneObject,
    merge_object_mask,
    render_part_masks,
    select_nearest_to_center,
    to_feature,
)
from .wrist import JointState, JointVelocity, WristParams, camera_world_pose, clamp, palm_normal_world


class Phase(str, enum.Enum):
    IDLE = "Idle"
    TRANSPORT = "Transport"
    ROTATION = "Rotation"
    GRASPING = "Grasping"


class EventKind(str, enum.Enum):
    ARM_RAISED = "ArmRaised"
    EMG_ROTATION_TRIGGER = "EmgRotationTrigger"
    EMG_CLOSE = "EmgClose"
    EMG_OPEN = "EmgOpen"
    ARM_LOWERED = "ArmLowered"


@dataclass(frozen=True)
class TriggerEvent:
    kind: EventKind
    t: float

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "t", float(self.t))


class NoGraspLabel(ValueError):
    pass


class Unreachable(RuntimeError):
    pass


# ---------------------------------------------------------------- commands

@dataclass(frozen=True)
class VelocityCommand:
    velocity: JointVelocity
    source: str  # "servo" or "rotation"

    def to_dict(self) -> dict:
        return {"command": f"{self.source}_velocity",
                "values": {"qdot_wfe": self.velocity.qdot_wfe, "qdot_wps": self.velocity.qdot_wps}}


@dataclass(frozen=True)
class GraspPlan:
    selected_label: PartLabel
    target_joints: JointState

    def __post_init__(self):
        if PartLabel(self.selected_label) is PartLabel.NO_GRASP:
            raise NoGraspLabel("a grasp plan cannot target a NoGrasp part")

    def to_dict(self) -> dict:
        return {"command": "grasp_plan",
                "values": {"label": PartLabel(self.selected_label).tag,
                           "q_wfe": self.target_joints.q_wfe, "q_wps": self.target_joints.q_wps}}


@dataclass(frozen=True)
class FingerCommand:
    action: str  # "close" or "open"; recorded, never actuated here

    def to_dict(self) -> dict:
        return {"command": "finger", "values": {"action": self.action}}


@dataclass(frozen=True)
class Notice:
    kind: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"command": "notice", "values": {"kind": self.kind, "detail": self.detail}}


@dataclass(frozen=True)
class NoOp:
    def to_dict(self) -> dict:
        return {"command": "none", "values": {}}


Command = Union[VelocityCommand, GraspPlan, FingerCommand, Notice, NoOp]


# ------------------------------------------------------------ grasp targets

def _palm_normal(hand_pose: Pose, params: WristParams, q: np.ndarray) -> np.ndarray:
    return hand_pose.rotation @ palm_normal_world(params.unlimited(), JointState.from_array(q))


def _horizontal_toward(hand_pose: Pose, object_centroid_world) -> np.ndarray:
    d = np.asarray(object_centroid_world, dtype=float) - hand_pose.translation
    d[2] = 0.0
    n = np.linalg.norm(d)
    if n < 1e-9:
        raise Unreachable("object lies on the hand's vertical; side direction undefined")
    return d / n


def grasp_error(label: PartLabel, normals: np.ndarray, hand_pose: Pose, object_centroid_world,
                side_max_yaw: float = math.radians(80.0)) -> np.ndarray:
    """Angle (rad) between world palm normal(s) and the admissible set for
    ``label``.

    TopGrasp admits only straight down. SideGrasp admits any horizontal
    direction within ``side_max_yaw`` of the horizontal hand-to-object
    direction, so the palm is level-sided and opens towards the object.
    """
    label = PartLabel(label)
    if label is PartLabel.NO_GRASP:
        raise NoGraspLabel("NoGrasp parts have no wrist target")
    n = np.asarray(normals, dtype=float)
    if label is PartLabel.TOP_GRASP:
        return np.arccos(np.clip(-n[..., 2], -1.0, 1.0))
    d = _horizontal_toward(hand_pose, object_centroid_world)
    psi = np.arctan2(n[..., 1], n[..., 0]) - math.atan2(d[1], d[0])
    psi = np.abs((psi + math.pi) % (2 * math.pi) - math.pi)
    outside = np.maximum(psi - side_max_yaw, 0.0)
    best = np.hypot(n[..., 0], n[..., 1]) * np.cos(outside)
    return np.arccos(np.clip(best, -1.0, 1.0))


def label_to_wrist_target(label: PartLabel, hand_pose: Pose, object_centroid_world,
                          params: WristParams, grid_step_deg: float = 5.0,
                          tolerance: float = math.radians(25.0),
                          side_max_yaw: float = math.radians(80.0)) -> JointState:
    """Joint configuration whose palm normal best matches the grasp for
    ``label``.

    A coarse grid over the joint box finds the best alignment; grid nodes
    that tie (flat optimum) are resolved towards the neutral wrist. The
    winner is then refined locally within the limits.
    """
    err = lambda normals: grasp_error(label, normals, hand_pose, object_centroid_world, side_max_yaw)
    lim = params.limits
    n_wfe = max(2, int(math.ceil((lim[0, 1] - lim[0, 0]) / math.radians(grid_step_deg))) + 1)
    n_wps = max(2, int(math.ceil((lim[1, 1] - lim[1, 0]) / math.radians(grid_step_deg))) + 1)
    wfe = np.linspace(lim[0, 0], lim[0, 1], n_wfe)
    wps = np.linspace(lim[1, 0], lim[1, 1], n_wps)
    W, Q = np.meshgrid(wfe, wps, indexing="ij")
    # palm normal in the forearm frame: Rz(wps) Rx(wfe) n_local, vectorised
    nl = np.asarray(params.palm_normal_local)
    cw, sw = np.cos(W), np.sin(W)
    ey = cw * nl[1] - sw * nl[2]
    ez = sw * nl[1] + cw * nl[2]
    cq, sq = np.cos(Q), np.sin(Q)
    base = np.stack([cq * nl[0] - sq * ey, sq * nl[0] + cq * ey, ez], axis=-1)
    costs = err(base @ hand_pose.rotation.T)
    tied = costs <= costs.min() + 1e-9
    excursion = np.where(tied, W**2 + Q**2, np.inf)
    i, j = np.unravel_index(int(np.argmin(excursion)), costs.shape)
    x0 = np.array([wfe[i], wps[j]])

    def cost(q):
        return float(err(_palm_normal(hand_pose, params, q)))

    q = x0
    if cost(x0) > 1e-9:
        res = minimize(cost, x0, method="L-BFGS-B", bounds=[tuple(lim[0]), tuple(lim[1])])
        if res.fun < cost(x0):
            q = res.x
    angle = cost(q)
    if angle > tolerance:
        raise Unreachable(f"best palm alignment is {math.degrees(angle):.1f} deg off target")
    return JointState.from_array(q)


# ------------------------------------------------------------ state machine

@dataclass(frozen=True)
class PipelineConfig:
    rotation_gain: float = 2.0          # 1/s, proportional position control
    rotation_tolerance: float = math.radians(5.0)
    lost_grace: float = 0.5             # s to hold the last servo command
    default_depth: float = 0.3          # used when masks carry no depth
    controller: Controller = Controller.PPIBVS

    def __post_init__(self):
        if self.rotation_gain <= 0 or self.rotation_tolerance <= 0 or self.lost_grace < 0:
            raise ValueError("rotation_gain, rotation_tolerance must be > 0 and lost_grace >= 0")
        object.__setattr__(self, "controller", Controller(self.controller))


@dataclass(frozen=True)
class PipelineContext:
    """Everything a tick needs besides the masks and joint state."""
    params: WristParams
    cfg: ControllerConfig
    intrinsics: CameraIntrinsics
    hand_pose: Pose
    object_centroid_world: tuple
    pipeline: PipelineConfig = PipelineConfig()


@dataclass(frozen=True)
class PipelineState:
    phase: Phase = Phase.IDLE
    plan: Optional[GraspPlan] = None
    last_servo: Optional[JointVelocity] = None
    lost_since: Optional[float] = None
    object_lost: bool = False  # sticky flag: the grace period ran out at least once


_TRANSITIONS = {
    (Phase.IDLE, EventKind.ARM_RAISED): Phase.TRANSPORT,
    (Phase.GRASPING, EventKind.ARM_LOWERED): Phase.IDLE,
}


def _wrapped_delta(params: WristParams, target: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = target - q
    for j in np.flatnonzero(params.continuous_mask()):
        d[j] = (d[j] + math.pi) % (2 * math.pi) - math.pi
    return d


def _rotation_trigger(state: PipelineState, masks: Sequence[PartMask], ctx: PipelineContext):
    graspable = [m for m in masks if m.label is not PartLabel.NO_GRASP]
    if not graspable:
        return state, Notice("NoGraspablePart", "no graspable part visible at the rotation trigger")
    part = select_nearest_to_center(graspable, ctx.intrinsics)
    try:
        target = label_to_wrist_target(part.label, ctx.hand_pose, ctx.object_centroid_world, ctx.params)
    except Unreachable as exc:
        return state, Notice("Unreachable", str(exc))
    plan = GraspPlan(part.label, target)
    return replace(state, phase=Phase.ROTATION, plan=plan, last_servo=None, lost_since=None), plan


def _transport_tick(state: PipelineState, masks, q: JointState, ctx: PipelineContext, t: float):
    if not masks:
        since = state.lost_since if state.lost_since is not None else t
        if state.last_servo is not None and t - since < ctx.pipeline.lost_grace:
            return replace(state, lost_since=since), VelocityCommand(state.last_servo, "servo")
        zero = JointVelocity(0.0, 0.0)
        return (replace(state, lost_since=since, last_servo=zero, object_lost=True),
                VelocityCommand(zero, "servo"))
    region = select_nearest_to_center(merge_object_mask(masks, ctx.cfg.adjacency_px), ctx.intrinsics)
    depth = region.mean_depth if region.mean_depth > 0 else ctx.pipeline.default_depth
    f = to_feature(ctx.intrinsics, region.centroid, depth)
    v = controller_step(ctx.pipeline.controller, f, q, ctx.params, ctx.cfg, region.centroid, ctx.intrinsics)
    return replace(state, last_servo=v, lost_since=None), VelocityCommand(v, "servo")


def _rotation_tick(state: PipelineState, q: JointState, ctx: PipelineContext):
    delta = _wrapped_delta(ctx.params, state.plan.target_joints.array(), q.array())
    if np.linalg.norm(delta) < ctx.pipeline.rotation_tolerance:
        return replace(state, phase=Phase.GRASPING), VelocityCommand(JointVelocity(0.0, 0.0), "rotation")
    return state, VelocityCommand(JointVelocity.from_array(ctx.pipeline.rotation_gain * delta), "rotation")


def step(state: PipelineState, event: Optional[TriggerEvent], masks: Sequence[PartMask],
         q: JointState, ctx: PipelineContext, t: float = 0.0) -> tuple[PipelineState, Command]:
    """Advance the machine by one event (``event`` given) or one tick.

    Events that are not legal in the current phase leave the state untouched
    and produce ``NoOp``.
    """
    phase = state.phase
    if event is not None:
        kind = event.kind
        if (phase, kind) in _TRANSITIONS:
            new = _TRANSITIONS[(phase, kind)]
            if new is Phase.IDLE:
                return PipelineState(object_lost=state.object_lost), NoOp()
            return replace(state, phase=new), NoOp()
        if phase is Phase.TRANSPORT and kind is EventKind.EMG_ROTATION_TRIGGER:
            return _rotation_trigger(state, masks, ctx)
        if phase is Phase.GRASPING and kind in (EventKind.EMG_CLOSE, EventKind.EMG_OPEN):
            return state, FingerCommand("close" if kind is EventKind.EMG_CLOSE else "open")
        return state, NoOp()

    if phase is Phase.TRANSPORT:
        return _transport_tick(state, masks, q, ctx, t)
    if phase is Phase.ROTATION:
        return _rotation_tick(state, q, ctx)
    return state, NoOp()


# ------------------------------------------------------------ event logs

def parse_events(lines: Iterable[str]) -> list[TriggerEvent]:
    """Read a JSON-lines log of ``{"t": seconds, "event": name}`` records."""
    events = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        try:
            ev = TriggerEvent(EventKind(rec["event"]), rec["t"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {n}: bad event record {line!r}") from exc
        if events and ev.t < events[-1].t:
            raise ValueError(f"line {n}: timestamps must be non-decreasing")
        events.append(ev)
    return events


def load_events(path) -> list[TriggerEvent]:
    with open(path) as fh:
        return parse_events(fh)


def dump_events(events: Sequence[TriggerEvent]) -> str:
    return "".join(json.dumps({"t": e.t, "event": e.kind.value}) + "\n" for e in events)


@dataclass
class SessionRecord:
    t: float
    phase_before: Phase
    phase: Phase
    command: Command
    event: Optional[EventKind] = None
    q: Optional[JointState] = None

    def to_dict(self) -> dict:
        d = {"t": self.t, "phase": self.phase.value}
        if self.event is not None:
            d["event"] = self.event.value
        d.update(self.command.to_dict())
        if self.q is not None:
            d["q"] = [self.q.q_wfe, self.q.q_wps]
        return d


@dataclass
class SessionResult:
    records: list = field(default_factory=list)
    final_q: Optional[JointState] = None
    final_state: PipelineState = PipelineState()

    def phases(self) -> list[Phase]:
        seq = [Phase.IDLE]
        for r in self.records:
            if r.phase is not seq[-1]:
                seq.append(r.phase)
        return seq

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.records)


def run_session(events: Sequence[TriggerEvent], scene: SceneObject, hand_pose: Pose, q0: JointState,
                params: WristParams, cfg: ControllerConfig, intrinsics: CameraIntrinsics,
                pipeline: PipelineConfig = PipelineConfig(), t_end: Optional[float] = None) -> SessionResult:
    """Replay an event log against the simulator with the forearm held still.

    Ticks run every ``cfg.dt`` from the first event to ``t_end`` (default:
    the last event). Events due at or before a tick are applied first, each
    as its own step. Velocity commands are integrated with the same clamp /
    wrap rule as the servo episodes.
    """
    if not events:
        return SessionResult(final_q=q0)
    ctx = PipelineContext(params, cfg, intrinsics, hand_pose,
                          tuple(scene.centroid_world().tolist()), pipeline)
    t0 = events[0].t
    t_end = events[-1].t if t_end is None else t_end
    n_ticks = int(math.floor((t_end - t0) / cfg.dt + 1e-9)) + 1
    state = PipelineState()
    q = q0
    out = SessionResult()
    pending = list(events)

    def masks_now():
        try:
            return render_part_masks(intrinsics, camera_world_pose(hand_pose, params, q), scene)
        except NothingVisible:
            return []

    for k in range(n_ticks):
        t = t0 + k * cfg.dt
        while pending and pending[0].t <= t + 1e-12:
            ev = pending.pop(0)
            before = state.phase
            state, cmd = step(state, ev, masks_now() if before is Phase.TRANSPORT else [], q, ctx, ev.t)
            out.records.append(SessionRecord(ev.t, before, state.phase, cmd, ev.kind, q))
        before = state.phase
        masks = masks_now() if before is Phase.TRANSPORT else []
        state, cmd = step(state, None, masks, q, ctx, t)
        out.records.append(SessionRecord(t, before, state.phase, cmd, None, q))
        if isinstance(cmd, VelocityCommand):
            qa, _ = clamp(params, q.array() + cmd.velocity.array() * cfg.dt)
            q = JointState.from_array(qa)
    # events falling between the last tick and t_end (rounding of dt)
    for ev in pending:
        if ev.t > t_end + 1e-12:
            break
        before = state.phase
        state, cmd = step(state, ev, masks_now() if before is Phase.TRANSPORT else [], q, ctx, ev.t)
        out.records.append(SessionRecord(ev.t, before, state.phase, cmd, ev.kind, q))
    out.final_q = q
    out.final_state = state
    return out
