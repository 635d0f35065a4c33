"""Semi-automatic part-mask labelling from pose chaining.

Given the object pose in the first camera frame and frame-to-frame camera
displacements from an external registration tool, every kept frame gets
its camera-to-object pose and its rendered part masks.

Input file::

    {"convention": "T_prev_to_next" | "T_next_to_prev",
     "initial_pose": {"rotation": ..., "translation": ...},
     "displacements": [{"frame": k, "pose": {...}, "from": j}, ...],
     "discarded": [k, ...],
     "reinit": [{"frame": k, "pose": {...}}, ...],
     "intrinsics": {...}}

Frames are numbered from 1 (the initial frame). A displacement entry for
frame ``k`` relates camera ``j`` (``"from"``, default ``k - 1``) to camera
``k``. With ``T_prev_to_next`` the stored pose is T_{c^j,c^k} (camera ``k``
expressed in camera ``j``); ``T_next_to_prev`` stores its inverse.
``reinit`` entries restart the chain from a fresh pose estimate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Pose, inverse, orthonormalize
from .vision import (
    CameraIntrinsics,
    NothingVisible,
    SceneObject,
    load_scene_object,
    mask_to_rle,
    render_in_camera,
)

CONVENTIONS = ("T_prev_to_next", "T_next_to_prev")


class ChainGap(ValueError):
    pass


class MeshMissing(FileNotFoundError):
    pass


@dataclass(frozen=True)
class Displacement:
    frame: int
    pose: Pose  # T_{c^from, c^frame}, already normalised to T_prev_to_next
    source: int

    def __post_init__(self):
        if self.source >= self.frame:
            raise ValueError(f"displacement into frame {self.frame} must come from an earlier frame")


@dataclass(frozen=True)
class AnnotationInput:
    initial_pose: Pose
    displacements: tuple
    intrinsics: CameraIntrinsics = CameraIntrinsics()
    object: Optional[SceneObject] = None
    discarded_frames: tuple = ()
    reinit: tuple = ()  # ((frame, T_{c^frame,o}), ...)
    first_frame: int = 1

    def __post_init__(self):
        frames = [d.frame for d in self.displacements]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("displacement frame indices must be strictly increasing")
        object.__setattr__(self, "discarded_frames", tuple(sorted(set(self.discarded_frames))))
        if self.first_frame in self.discarded_frames:
            raise ValueError("the initial frame cannot be discarded")

    @property
    def last_frame(self) -> int:
        cands = [self.first_frame, *(d.frame for d in self.displacements),
                 *self.discarded_frames, *(k for k, _ in self.reinit)]
        return max(cands)

    @classmethod
    def from_dict(cls, d: dict, obj: Optional[SceneObject] = None) -> "AnnotationInput":
        conv = d.get("convention")
        if conv is None:
            raise ValueError('annotation input must declare a "convention"')
        if conv not in CONVENTIONS:
            raise ValueError(f"unknown convention {conv!r}; expected one of {CONVENTIONS}")
        disp = []
        for e in d.get("displacements", []):
            p = Pose.from_dict(e["pose"])
            if conv == "T_next_to_prev":
                p = inverse(p)
            k = int(e["frame"])
            disp.append(Displacement(k, p, int(e.get("from", k - 1))))
        intr = CameraIntrinsics(**d["intrinsics"]) if "intrinsics" in d else CameraIntrinsics()
        reinit = tuple((int(e["frame"]), Pose.from_dict(e["pose"])) for e in d.get("reinit", []))
        return cls(Pose.from_dict(d["initial_pose"]), tuple(disp), intr, obj,
                   tuple(int(k) for k in d.get("discarded", [])), reinit, int(d.get("first_frame", 1)))

    def to_dict(self) -> dict:
        return {
            "convention": "T_prev_to_next",
            "first_frame": self.first_frame,
            "initial_pose": self.initial_pose.to_dict(),
            "displacements": [{"frame": x.frame, "from": x.source, "pose": x.pose.to_dict()}
                              for x in self.displacements],
            "discarded": list(self.discarded_frames),
            "reinit": [{"frame": k, "pose": p.to_dict()} for k, p in self.reinit],
            "intrinsics": self.intrinsics.to_dict(),
        }


def load_annotation_input(path, object_path=None) -> AnnotationInput:
    obj = None
    if object_path is not None:
        if not Path(object_path).is_file():
            raise MeshMissing(f"object mesh file not found: {object_path}")
        obj = load_scene_object(object_path)
    return AnnotationInput.from_dict(json.loads(Path(path).read_text()), obj)


@dataclass(frozen=True, eq=False)
class FrameAnnotation:
    frame_index: int
    pose: Pose  # T_{c^k,o}
    masks: tuple

    def to_dict(self, intrinsics: CameraIntrinsics) -> dict:
        return {
            "frame": self.frame_index,
            "pose": self.pose.to_dict(),
            "masks": [mask_to_rle(m, intrinsics.width, intrinsics.height) for m in self.masks],
        }


@dataclass
class AnnotationResult:
    frames: list
    gaps: list = field(default_factory=list)       # discarded frames lying inside a chain
    anchors: list = field(default_factory=list)    # frames where a chain (re)starts
    on_discard: str = "compose"

    def poses(self) -> dict:
        return {f.frame_index: f.pose for f in self.frames}


def chain_poses(inp: AnnotationInput, on_discard: str = "compose") -> tuple[dict, list, list]:
    """Camera-to-object pose for every frame the chain reaches.

    Each frame carries (anchor pose T_{c^a,o}, running product T_{c^a,c^k});
    the product is re-orthonormalised at every step and inverted once, as in
    ``chain_displacements``. Returns (poses of kept frames, gaps, anchors).
    """
    if on_discard not in ("compose", "break"):
        raise ValueError("on_discard must be 'compose' or 'break'")
    discarded = set(inp.discarded_frames)
    by_frame = {d.frame: d for d in inp.displacements}
    reinit = dict(inp.reinit)
    reinit.setdefault(inp.first_frame, inp.initial_pose)

    state: dict[int, tuple] = {}  # frame -> (anchor_pose, R, t)
    poses, gaps, anchors = {}, [], []
    for k in range(inp.first_frame, inp.last_frame + 1):
        is_discarded = k in discarded
        if k in reinit and not is_discarded:
            state[k] = (reinit[k], np.eye(3), np.zeros(3))
            anchors.append(k)
        else:
            d = by_frame.get(k)
            src = state.get(d.source) if d is not None else None
            usable = src is not None and not (on_discard == "break" and (is_discarded or d.source in discarded))
            if usable:
                anchor, R, t = src
                state[k] = (anchor, orthonormalize(R @ d.pose.rotation), R @ d.pose.translation + t)
            elif not is_discarded:
                why = "no displacement" if d is None else f"frame {d.source} is unavailable"
                raise ChainGap(f"frame {k}: {why}")
        if is_discarded:
            continue
        anchor, R, t = state[k]
        Rt = R.T
        poses[k] = Pose(Rt @ anchor.rotation, Rt @ (anchor.translation - t))
    kept = sorted(poses)
    for k in sorted(discarded):
        if kept and kept[0] < k < kept[-1]:
            gaps.append(k)
    return poses, gaps, anchors


def annotate_sequence(inp: AnnotationInput, on_discard: str = "compose") -> AnnotationResult:
    """Chain the poses, then render every kept frame's part masks.

    ``on_discard="compose"`` carries the chain through discarded frames using
    their displacements; ``"break"`` refuses to and needs either a direct
    displacement across the gap (``"from"``) or a ``reinit`` entry.
    """
    if inp.object is None or not inp.object.parts:
        raise MeshMissing("annotation needs an object mesh")
    poses, gaps, anchors = chain_poses(inp, on_discard)
    frames = []
    for k in sorted(poses):
        try:
            masks = tuple(render_in_camera(inp.intrinsics, poses[k], inp.object))
        except NothingVisible:
            masks = ()
        frames.append(FrameAnnotation(k, poses[k], masks))
    return AnnotationResult(frames, gaps, anchors, on_discard)


def write_annotations(result: AnnotationResult, inp: AnnotationInput, out_dir) -> Path:
    """One ``frame_XXXXXX.json`` per kept frame plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for fa in result.frames:
        name = f"frame_{fa.frame_index:06d}.json"
        (out / name).write_text(json.dumps(fa.to_dict(inp.intrinsics), sort_keys=True) + "\n")
        files.append(name)
    manifest = {
        "frames": [fa.frame_index for fa in result.frames],
        "files": files,
        "discarded": list(inp.discarded_frames),
        "gaps": result.gaps,
        "has_gaps": bool(result.gaps),
        "anchors": result.anchors,
        "on_discard": result.on_discard,
        "intrinsics": inp.intrinsics.to_dict(),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
