"""Run configuration files (JSON or TOML).

Recognised tables, all optional::

    [wrist]       camera_tilt, camera_offset, wfe_limits, wps_limits, palm_normal_local  (degrees)
    [controller]  lambda, lambda_wps, convergence_eps, convergence_hold, max_iterations,
                  dt, damping, pinv_tolerance, handedness, adjacency_px
    [sampler]     radius_range, radius_bins, points_per_bin, rotation_range (degrees),
                  reference_q (degrees), max_attempts, view_margin
    [intrinsics]  fx, fy, cx, cy, width, height
    [pipeline]    rotation_gain, rotation_tolerance (degrees), lost_grace, default_depth, controller
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .bench import BENCH_INTRINSICS, HemisphereSampler
from .pipeline import PipelineConfig
from .servo import ControllerConfig
from .vision import CameraIntrinsics
from .wrist import JointState, WristParams


def read_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _sampler_overrides(d: dict) -> dict:
    kw = {}
    for key in ("radius_bins", "points_per_bin", "max_attempts"):
        if key in d:
            kw[key] = int(d[key])
    if "view_margin" in d:
        kw["view_margin"] = float(d["view_margin"])
    if "radius_range" in d:
        kw["radius_range"] = tuple(float(x) for x in d["radius_range"])
    if "center" in d:
        kw["center"] = tuple(float(x) for x in d["center"])
    if "rotation_range" in d:
        kw["rotation_range"] = tuple(math.radians(x) for x in d["rotation_range"])
    if "reference_q" in d:
        kw["reference_q"] = JointState.from_degrees(*d["reference_q"])
    return kw


@dataclass(frozen=True)
class RunConfig:
    wrist: WristParams = WristParams()
    controller: ControllerConfig = ControllerConfig()
    intrinsics: CameraIntrinsics = BENCH_INTRINSICS
    pipeline: PipelineConfig = PipelineConfig()
    sampler: dict = field(default_factory=dict)  # HemisphereSampler field overrides

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        pipe = dict(d.get("pipeline", {}))
        if "rotation_tolerance" in pipe:
            pipe["rotation_tolerance"] = math.radians(pipe["rotation_tolerance"])
        return cls(
            wrist=WristParams.from_dict(d.get("wrist", {})),
            controller=ControllerConfig.from_dict(d.get("controller", {})),
            intrinsics=CameraIntrinsics(**d["intrinsics"]) if "intrinsics" in d else BENCH_INTRINSICS,
            pipeline=PipelineConfig(**pipe),
            sampler=_sampler_overrides(d.get("sampler", {})),
        )

    def make_sampler(self, base: HemisphereSampler, seed: Optional[int] = None) -> HemisphereSampler:
        s = replace(base, **self.sampler)
        return s if seed is None else replace(s, seed=seed)


def load_run_config(path=None) -> RunConfig:
    return RunConfig() if path is None else RunConfig.from_dict(read_config_file(path))
