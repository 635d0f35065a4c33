"""Pinhole camera, part-labelled meshes and ground-truth part masks.

The renderer stands in for a part-segmentation network: every visible
object part yields one mask, resolved per pixel by a z-buffer.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from ._raster import rasterize
from .geometry import Pose, compose, inverse


class BehindCamera(ValueError):
    pass


class NothingVisible(RuntimeError):
    pass


class EmptyMask(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class NonPositiveDepth(ValueError):
    pass


class PartLabel(enum.IntEnum):
    TOP_GRASP = 0
    SIDE_GRASP = 1
    NO_GRASP = 2

    @property
    def tag(self) -> str:
        return _TAGS[self]

    @classmethod
    def parse(cls, s: str) -> "PartLabel":
        key = s.replace("_", "").replace(" ", "").lower()
        for label, tag in _TAGS.items():
            if tag.lower() == key:
                return label
        raise ValueError(f"unknown part label {s!r}")


_TAGS = {PartLabel.TOP_GRASP: "TopGrasp", PartLabel.SIDE_GRASP: "SideGrasp", PartLabel.NO_GRASP: "NoGrasp"}


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 460.0
    fy: float = 460.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("fx", "fy", "cx", "cy", "width", "height")}


TEST_INTRINSICS = CameraIntrinsics().scaled(160, 120)


@dataclass(frozen=True, eq=False)
class Part:
    label: PartLabel
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float)
        F = np.array(self.triangles, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 3 or F.ndim != 2 or F.shape[1] != 3 or len(F) == 0:
            raise ValueError("part needs (N,3) vertices and a non-empty (M,3) triangle list")
        if F.min() < 0 or F.max() >= len(V):
            raise ValueError("triangle index out of range")
        tri = V[F]
        area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        if np.any(area2 <= 1e-15):
            raise ValueError("mesh contains zero-area triangles")
        V.flags.writeable = False
        F.flags.writeable = False
        object.__setattr__(self, "label", PartLabel(self.label))
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", F)

    def triangle_vertices(self) -> np.ndarray:
        return self.vertices[self.triangles]


@dataclass(frozen=True, eq=False)
class SceneObject:
    parts: tuple
    pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ValueError("object needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    def centroid_local(self) -> np.ndarray:
        """Area-weighted surface centroid in the object frame."""
        tri = np.concatenate([p.triangle_vertices() for p in self.parts])
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        return (tri.mean(axis=1) * area[:, None]).sum(0) / area.sum()

    def centroid_world(self) -> np.ndarray:
        return self.pose.apply(self.centroid_local())

    def vertices_world(self) -> np.ndarray:
        return self.pose.apply(np.concatenate([p.vertices for p in self.parts]))

    def with_pose(self, pose: Pose) -> "SceneObject":
        return replace(self, pose=pose)

    def to_dict(self) -> dict:
        return {
            "parts": [
                {"label": p.label.tag, "vertices": p.vertices.tolist(), "triangles": p.triangles.tolist()}
                for p in self.parts
            ],
            "pose": self.pose.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        parts = [Part(PartLabel.parse(p["label"]), p["vertices"], p["triangles"]) for p in d["parts"]]
        pose = Pose.from_dict(d["pose"]) if "pose" in d else Pose.identity()
        return cls(tuple(parts), pose)


def load_scene_object(path) -> SceneObject:
    return SceneObject.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class PartMask:
    label: PartLabel
    pixels: np.ndarray  # (N, 2) integer (u, v)
    centroid: np.ndarray
    mean_depth: float
    part_index: int = -1

    @classmethod
    def from_pixels(cls, label, pixels, mean_depth: float, part_index: int = -1) -> "PartMask":
        pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        if len(pixels) == 0:
            raise EmptyMask("mask has no pixels")
        if mean_depth <= 0:
            raise NonPositiveDepth("mean_depth must be positive")
        pixels.flags.writeable = False
        c = pixels.mean(axis=0)
        return cls(PartLabel(label), pixels, c, float(mean_depth), part_index)

    def __len__(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True, eq=False)
class Region:
    """Label-free union of neighbouring masks."""
    pixels: np.ndarray
    centroid: np.ndarray
    mean_depth: float
    members: tuple

    @property
    def label(self) -> PartLabel:
        return min(m.label for m in self.members)

    def __len__(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class FeaturePoint:
    x: float
    y: float
    depth: float

    def __post_init__(self):
        if not self.depth > 0:
            raise NonPositiveDepth(f"feature depth must be positive, got {self.depth}")

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


def project_point(intrinsics: CameraIntrinsics, p_camera) -> tuple[float, float]:
    x, y, z = (float(c) for c in p_camera)
    if z <= 0:
        raise BehindCamera(f"point has z={z} <= 0")
    return intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy


def _camera_triangles(camera_from_object: Pose, obj: SceneObject):
    tris, owner = [], []
    for i, part in enumerate(obj.parts):
        tv = part.triangle_vertices()
        tris.append(camera_from_object.apply(tv.reshape(-1, 3)).reshape(-1, 3, 3))
        owner.append(np.full(len(tv), i, dtype=np.int64))
    return np.concatenate(tris), np.concatenate(owner)


def render_label_image(intrinsics: CameraIntrinsics, camera_from_object: Pose, obj: SceneObject):
    """Depth and part-index images for an object posed in the camera frame
    (``obj.pose`` is ignored here)."""
    tris, owner = _camera_triangles(camera_from_object, obj)
    return rasterize(tris, owner, intrinsics.width, intrinsics.height,
                     intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy)


def masks_from_label_image(obj: SceneObject, depth: np.ndarray, label: np.ndarray) -> list[PartMask]:
    masks = []
    for i, part in enumerate(obj.parts):
        vs, us = np.nonzero(label == i)
        if len(us) == 0:
            continue
        masks.append(PartMask.from_pixels(part.label, np.stack([us, vs], axis=1),
                                          float(depth[vs, us].mean()), part_index=i))
    return masks


def render_in_camera(intrinsics: CameraIntrinsics, camera_from_object: Pose, obj: SceneObject) -> list[PartMask]:
    """Part masks for the object at pose T_{c,o}."""
    depth, label = render_label_image(intrinsics, camera_from_object, obj)
    masks = masks_from_label_image(obj, depth, label)
    if not masks:
        raise NothingVisible("no object part projects into the image")
    return masks


def render_part_masks(intrinsics: CameraIntrinsics, camera_pose: Pose, obj: SceneObject) -> list[PartMask]:
    """Part masks seen by a camera at world pose ``camera_pose`` (T_{w,c})."""
    return render_in_camera(intrinsics, compose(inverse(camera_pose), obj.pose), obj)


def object_in_view(intrinsics: CameraIntrinsics, camera_pose: Pose, obj: SceneObject,
                   margin: float = 0.1) -> bool:
    """Cheap visibility test: the object's centroid projects in front of the
    camera and inside the image shrunk by ``margin`` on each side."""
    pc = inverse(camera_pose).apply(obj.centroid_world())
    if pc[2] <= 0.05:
        return False
    u, v = project_point(intrinsics, pc)
    mu, mv = margin * intrinsics.width, margin * intrinsics.height
    return mu <= u <= intrinsics.width - 1 - mu and mv <= v <= intrinsics.height - 1 - mv


def mask_centroid(mask: Union[PartMask, Region]) -> np.ndarray:
    if len(mask.pixels) == 0:
        raise EmptyMask("cannot take the centroid of an empty mask")
    return np.asarray(mask.pixels, dtype=float).mean(axis=0)


def _within_chebyshev(a: np.ndarray, b: np.ndarray, radius: float) -> bool:
    """True if some pixel of ``a`` is within Chebyshev distance ``radius`` of
    some pixel of ``b``."""
    r = int(math.floor(radius))
    lo = np.minimum(a.min(0), b.min(0))
    hi = np.maximum(a.max(0), b.max(0))
    # bounding boxes further apart than r cannot touch
    gap = np.maximum(a.min(0) - b.max(0), b.min(0) - a.max(0))
    if gap.max() > r:
        return False
    shape = (hi - lo + 1)[::-1]
    grid = np.zeros(shape, dtype=bool)
    grid[a[:, 1] - lo[1], a[:, 0] - lo[0]] = True
    if r > 0:
        grid = ndimage.maximum_filter(grid, size=2 * r + 1, mode="constant")
    return bool(grid[b[:, 1] - lo[1], b[:, 0] - lo[0]].any())


def _pixel_keys(p: np.ndarray) -> np.ndarray:
    return (p[:, 1].astype(np.int64) << 32) + p[:, 0]


def merge_object_mask(masks: Sequence[Union[PartMask, Region]], adjacency_px: float = 3.0) -> list[Region]:
    """Union masks whose pixel sets come within ``adjacency_px`` (Chebyshev)
    of each other, transitively. Regions are ordered by their first member."""
    if adjacency_px < 0:
        raise ValueError("adjacency_px must be non-negative")
    masks = list(masks)
    n = len(masks)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) == find(j):
                continue
            if _within_chebyshev(masks[i].pixels, masks[j].pixels, adjacency_px):
                parent[find(j)] = find(i)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    regions = []
    for idx in groups.values():
        members = []
        for i in idx:
            members.extend(masks[i].members if isinstance(masks[i], Region) else (masks[i],))
        keys = np.unique(np.concatenate([_pixel_keys(masks[i].pixels) for i in idx]))
        pix = np.stack([keys & 0xFFFFFFFF, keys >> 32], axis=1)
        pix.flags.writeable = False
        w = np.array([len(masks[i]) for i in idx], dtype=float)
        depth = float(np.dot(w, [masks[i].mean_depth for i in idx]) / w.sum())
        regions.append(Region(pix, pix.mean(axis=0), depth, tuple(members)))
    return regions


def select_nearest_to_center(items: Sequence, intrinsics: CameraIntrinsics):
    """Item whose centroid is closest to the principal point. Ties go to the
    larger pixel count, then the lower label ordinal; any remaining tie is
    settled by centroid (row, column) and then the pixel set itself, so the
    choice never depends on list order."""
    if len(items) == 0:
        raise EmptyInput("nothing to select from")

    def key(m):
        c = np.asarray(m.centroid, dtype=float)
        return (math.hypot(c[0] - intrinsics.cx, c[1] - intrinsics.cy), -len(m.pixels), int(m.label))

    keys = [key(m) for m in items]
    best = min(keys)
    tied = [m for m, k in zip(items, keys) if k == best]
    if len(tied) == 1:
        return tied[0]

    def last_resort(m):
        c = np.asarray(m.centroid, dtype=float)
        return (c[1], c[0], np.sort(_pixel_keys(np.asarray(m.pixels))).tolist())

    return min(tied, key=last_resort)


def to_feature(intrinsics: CameraIntrinsics, centroid_px, depth: float) -> FeaturePoint:
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    u, v = centroid_px
    return FeaturePoint((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, float(depth))


def mask_to_rle(mask: Union[PartMask, Region], width: int, height: int) -> dict:
    """Row-major run-length encoding; ``counts`` alternate background and
    foreground runs, starting with background."""
    img = np.zeros(height * width, dtype=bool)
    px = np.asarray(mask.pixels)
    img[px[:, 1] * width + px[:, 0]] = True
    change = np.flatnonzero(np.diff(np.concatenate([[False], img, [False]]).astype(np.int8)))
    edges = np.concatenate([[0], change, [img.size]])
    counts = np.diff(edges)
    counts = counts[:-1] if counts[-1] == 0 else counts
    out = {"size": [height, width], "counts": counts.tolist()}
    if isinstance(mask, PartMask):
        out["label"] = mask.label.tag
        out["centroid"] = [float(c) for c in mask.centroid]
        out["mean_depth"] = mask.mean_depth
    return out


def rle_to_pixels(rle: dict) -> np.ndarray:
    height, width = rle["size"]
    img = np.zeros(height * width, dtype=bool)
    pos, fg = 0, False
    for c in rle["counts"]:
        if fg:
            img[pos:pos + c] = True
        pos += c
        fg = not fg
    idx = np.flatnonzero(img)
    return np.stack([idx % width, idx // width], axis=1)
