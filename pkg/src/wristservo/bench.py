"""Experiment harness: hemisphere viewpoints, the s-IBVS / pp-IBVS comparison
and the two-start divergence scenario."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .geometry import Pose, compose, inverse, rot_y, rot_z
from .servo import Controller, ControllerConfig, EpisodeResult, observe, controller_step, simulate_episode
from .vision import CameraIntrinsics, NothingVisible, SceneObject, object_in_view
from .wrist import JointState, WristParams, camera_world_pose, forward_kinematics

# Published reference values, printed next to the measured ones.
REFERENCE_ROW = {
    "s-IBVS": {"iterations": "213.5 +/- 124.9", "natural": "13/20"},
    "pp-IBVS": {"iterations": "361.7 +/- 70.5", "natural": "20/20"},
}

BENCH_INTRINSICS = CameraIntrinsics().scaled(160, 120)


class SamplingExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class HemisphereSampler:
    center: tuple = (0.0, 0.0, 0.0)
    radius_range: tuple = (0.2, 1.0)
    radius_bins: int = 6
    points_per_bin: int = 400
    rotation_range: tuple = (0.0, math.pi / 2)
    seed: int = 0
    # wrist configuration at which the placed camera looks at the target
    reference_q: JointState = JointState(0.0, 0.0)
    max_attempts: int = 1000
    view_margin: float = 0.1

    def __post_init__(self):
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radius_range must satisfy 0 < min <= max")
        if self.radius_bins < 1 or self.points_per_bin < 1:
            raise ValueError("radius_bins and points_per_bin must be >= 1")
        if not 0 <= self.rotation_range[0] <= self.rotation_range[1]:
            raise ValueError("rotation_range must be [0, max]")

    def bin_edges(self) -> np.ndarray:
        return np.linspace(self.radius_range[0], self.radius_range[1], self.radius_bins + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reference_q"] = [self.reference_q.q_wfe, self.reference_q.q_wps]
        return d


@dataclass(frozen=True, eq=False)
class Viewpoint:
    hand_pose: Pose
    q0: JointState
    radius: float
    direction: np.ndarray
    roll: float
    radius_bin: int

    def __iter__(self):
        # unpacks as (hand_pose, q0)
        return iter((self.hand_pose, self.q0))


def look_rotation(forward: np.ndarray, roll: float = 0.0) -> np.ndarray:
    """Camera rotation (x right, y down, z forward) with image 'down' as close
    to world -z as possible, then rolled about the optical axis."""
    z = forward / np.linalg.norm(forward)
    down = np.array([0.0, 0.0, -1.0])
    x = np.cross(down, z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(np.array([0.0, 1.0, 0.0]), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z]) @ rot_z(roll)


def place_hand(position, target, roll: float, params: WristParams, reference_q: JointState) -> Pose:
    """Forearm pose whose camera, at ``reference_q``, sits near ``position``
    and looks at ``target``."""
    T_bc = forward_kinematics(params.unlimited(), reference_q)
    R_wc = look_rotation(np.asarray(target, float) - np.asarray(position, float), roll)
    R_wb = R_wc @ T_bc.rotation.T
    return Pose(R_wb, np.asarray(position, dtype=float))


def _surface_point(rng: np.random.Generator, scene: SceneObject) -> np.ndarray:
    tri = np.concatenate([p.triangle_vertices() for p in scene.parts])
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    k = rng.choice(len(tri), p=area / area.sum())
    a, b = rng.random(2)
    if a + b > 1:
        a, b = 1 - a, 1 - b
    p = tri[k, 0] + a * (tri[k, 1] - tri[k, 0]) + b * (tri[k, 2] - tri[k, 0])
    return scene.pose.apply(p)


def _draw(rng, s: HemisphereSampler, r_lo, r_hi, bin_index, scene, params, intrinsics) -> Viewpoint:
    # area-uniform on the upper hemisphere: z ~ U(0, 1), azimuth ~ U(0, 2pi)
    z = rng.uniform(0.0, 1.0)
    phi = rng.uniform(0.0, 2 * math.pi)
    rho = math.sqrt(max(0.0, 1.0 - z * z))
    direction = np.array([rho * math.cos(phi), rho * math.sin(phi), z])
    radius = rng.uniform(r_lo, r_hi) if r_hi > r_lo else r_lo
    roll = rng.uniform(*s.rotation_range) if s.rotation_range[1] > s.rotation_range[0] else s.rotation_range[0]
    center = np.asarray(s.center, dtype=float)
    position = center + radius * direction
    target = _surface_point(rng, scene) if scene is not None else center
    hand = place_hand(position, target, roll, params, s.reference_q)
    lim = params.limits
    for _ in range(s.max_attempts):
        q = JointState(rng.uniform(*lim[0]), rng.uniform(*lim[1]))
        if scene is None or object_in_view(intrinsics, camera_world_pose(hand, params, q), scene, s.view_margin):
            return Viewpoint(hand, q, radius, direction, roll, bin_index)
    raise SamplingExhausted(f"object not in view after {s.max_attempts} wrist draws")


def iter_viewpoints(s: HemisphereSampler, scene: Optional[SceneObject] = None,
                    params: Optional[WristParams] = None,
                    intrinsics: Optional[CameraIntrinsics] = None,
                    rng: Optional[np.random.Generator] = None) -> Iterator[Viewpoint]:
    """Endless stream of viewpoints cycling over radius bins."""
    params = params or WristParams()
    intrinsics = intrinsics or BENCH_INTRINSICS
    rng = rng or np.random.Generator(np.random.PCG64(s.seed))
    edges = s.bin_edges()
    b = 0
    while True:
        yield _draw(rng, s, edges[b], edges[b + 1], b, scene, params, intrinsics)
        b = (b + 1) % s.radius_bins


def sample_hemisphere(s: HemisphereSampler, scene: Optional[SceneObject] = None,
                      params: Optional[WristParams] = None,
                      intrinsics: Optional[CameraIntrinsics] = None) -> list[Viewpoint]:
    """``points_per_bin`` viewpoints in each radius bin (bin-major order).

    With a ``scene`` the forearm looks at random surface points and the wrist
    start is rejection-sampled until the object is in view; without one the
    target is ``s.center`` and the wrist start is unconstrained.
    """
    params = params or WristParams()
    intrinsics = intrinsics or BENCH_INTRINSICS
    rng = np.random.Generator(np.random.PCG64(s.seed))
    edges = s.bin_edges()
    out = []
    for b in range(s.radius_bins):
        for _ in range(s.points_per_bin):
            out.append(_draw(rng, s, edges[b], edges[b + 1], b, scene, params, intrinsics))
    return out


# -- comparison -------------------------------------------------------------

def _run_pair(args):
    scene, vp, params, intrinsics, cfg = args
    try:
        return [simulate_episode(c, scene, vp.hand_pose, vp.q0, params, intrinsics, cfg) for c in Controller]
    except NothingVisible:
        return None


@dataclass
class ControllerSummary:
    mean_iterations: float
    std_iterations: float
    natural: int
    converged: int
    total: int


@dataclass
class ComparisonReport:
    seed: int
    n_points: int
    summary: dict
    rows: list
    rejected: int
    config: dict = field(default_factory=dict)
    episodes: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "controller", "iterations", "converged", "natural", "final_error"])
        for r in self.rows:
            w.writerow([r["episode"], r["controller"], r["iterations"], int(r["converged"]),
                        int(r["natural"]), repr(r["final_error"])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_points": self.n_points,
            "rejected": self.rejected,
            "summary": {k: asdict(v) for k, v in self.summary.items()},
            "reference": REFERENCE_ROW,
            "rows": self.rows,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        lines = [
            "Absolute iteration counts depend on unpublished gains; compare the ordering",
            "of mean iterations and the natural-configuration counts.",
            f"{'method':<9} {'iterations (mean +/- std)':>26} {'natural':>8} {'converged':>10}   reference",
        ]
        for name, s in self.summary.items():
            ref = REFERENCE_ROW[name]
            lines.append(
                f"{name:<9} {s.mean_iterations:>14.1f} +/- {s.std_iterations:<7.1f} "
                f"{s.natural:>3}/{s.total:<4} {s.converged:>5}/{s.total:<4}   "
                f"{ref['iterations']}, {ref['natural']}"
            )
        return "\n".join(lines)


def default_bench_scene() -> SceneObject:
    from .scenes import make_bottle
    return make_bottle()


def comparison_sampler(seed: int, radius: float = 0.35) -> HemisphereSampler:
    return HemisphereSampler(radius_range=(radius, radius), radius_bins=1, points_per_bin=1, seed=seed)


def _pool_size(workers: Optional[int]) -> int:
    return max(1, workers if workers is not None else (os.cpu_count() or 1))


def run_comparison(n_points: int = 20, scene: Optional[SceneObject] = None,
                   params: Optional[WristParams] = None, cfg: Optional[ControllerConfig] = None,
                   seed: int = 7, intrinsics: Optional[CameraIntrinsics] = None,
                   radius: float = 0.35, workers: Optional[int] = None,
                   sampler: Optional[HemisphereSampler] = None) -> ComparisonReport:
    """Run both controllers from identical starts at ``n_points`` hemisphere
    viewpoints. Starts rejected by the simulator are replaced by fresh draws."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    scene = scene or default_bench_scene()
    params = params or WristParams()
    cfg = cfg or ControllerConfig()
    intrinsics = intrinsics or BENCH_INTRINSICS
    sampler = sampler or comparison_sampler(seed, radius)
    sampler = replace(sampler, center=tuple(float(c) for c in scene.centroid_world()))
    stream = iter_viewpoints(sampler, scene, params, intrinsics)
    nworkers = _pool_size(workers)

    accepted: list = []
    rejected = 0
    pool = ProcessPoolExecutor(nworkers) if nworkers > 1 else None
    try:
        while len(accepted) < n_points:
            need = n_points - len(accepted)
            batch = [next(stream) for _ in range(need)]
            jobs = [(scene, vp, params, intrinsics, cfg) for vp in batch]
            results = pool.map(_run_pair, jobs) if pool else map(_run_pair, jobs)
            for vp, pair in zip(batch, results):
                if pair is None:
                    rejected += 1
                else:
                    accepted.append((vp, pair))
    finally:
        if pool:
            pool.shutdown()

    rows, summary = [], {}
    for idx, (vp, pair) in enumerate(accepted):
        for r in pair:
            rows.append({"episode": idx, "controller": r.controller, "iterations": r.iterations,
                         "converged": r.converged, "natural": r.natural, "final_error": r.final_error_norm})
    for c in Controller:
        eps = [pair[i] for _, pair in accepted for i in range(2) if pair[i].controller == c.value]
        its = np.array([e.iterations for e in eps], dtype=float)
        summary[c.value] = ControllerSummary(
            mean_iterations=float(its.mean()), std_iterations=float(its.std()),
            natural=sum(e.natural for e in eps), converged=sum(e.converged for e in eps), total=len(eps))
    config = {"wrist": params.to_dict(), "controller": cfg.to_dict(), "intrinsics": intrinsics.to_dict(),
              "sampler": sampler.to_dict()}
    return ComparisonReport(seed, n_points, summary, rows, rejected, config,
                            episodes=[pair for _, pair in accepted])


# -- two-start divergence scenario ---------------------------------------------

@dataclass
class Fig3Trace:
    controller: str
    initial_wfe_deg: float
    first_wps_sign: int
    result: EpisodeResult


@dataclass
class Fig3Result:
    traces: list

    def signs(self, controller) -> tuple:
        c = Controller(controller).value
        return tuple(t.first_wps_sign for t in self.traces if t.controller == c)

    def format(self) -> str:
        lines = ["controller  initial WFE  first WPS sign  iterations  natural"]
        for t in self.traces:
            lines.append(f"{t.controller:<10} {t.initial_wfe_deg:>+8.1f}    {t.first_wps_sign:>+6d}      "
                         f"{t.result.iterations:>8}   {t.result.natural}")
        pp, s = self.signs(Controller.PPIBVS), self.signs(Controller.SIBVS)
        lines.append(f"pp-IBVS first-step WPS signs: {pp} (identical: {len(set(pp)) == 1})")
        lines.append(f"s-IBVS first-step WPS signs: {s} (identical: {len(set(s)) == 1})")
        return "\n".join(lines)


def fig3_camera_pose(scene: SceneObject, distance: float = 0.35, offset_x: float = 0.15,
                     elevation: float = math.radians(35.0)) -> Pose:
    """World camera pose that sees the object at normalised image offset
    ``(offset_x, 0)``."""
    c = scene.centroid_world()
    pos = c + distance * np.array([-math.cos(elevation), 0.0, math.sin(elevation)])
    R0 = look_rotation(c - pos)
    # yaw the view so the object sits to the right of the image centre
    return Pose(R0 @ rot_y(-math.atan(offset_x)), pos)


def run_fig3_scenario(params: Optional[WristParams] = None, cfg: Optional[ControllerConfig] = None,
                      scene: Optional[SceneObject] = None, intrinsics: Optional[CameraIntrinsics] = None,
                      camera_pose: Optional[Pose] = None, initial_wfe_deg: Sequence[float] = (10.0, -20.0),
                      initial_wps_deg: float = 0.0) -> Fig3Result:
    """Same camera view, two initial flexion angles (10 deg flexion, 20 deg
    extension), both controllers. The forearm pose is solved per start so
    the first image is identical."""
    params = params or WristParams()
    cfg = cfg or ControllerConfig()
    scene = scene or default_bench_scene()
    intrinsics = intrinsics or BENCH_INTRINSICS
    camera_pose = camera_pose or fig3_camera_pose(scene)
    traces = []
    for c in Controller:
        for wfe in initial_wfe_deg:
            q0 = JointState.from_degrees(wfe, initial_wps_deg)
            hand = compose(camera_pose, inverse(forward_kinematics(params, q0)))
            region, f = observe(scene, hand, q0, params, intrinsics, cfg.adjacency_px)
            qdot = controller_step(c, f, q0, params, cfg, region.centroid, intrinsics)
            res = simulate_episode(c, scene, hand, q0, params, intrinsics, cfg)
            traces.append(Fig3Trace(c.value, wfe, int(np.sign(qdot.qdot_wps)), res))
    return Fig3Result(traces)
