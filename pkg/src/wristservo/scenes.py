"""Analytic meshes used by the simulator and tests."""
from __future__ import annotations

import numpy as np

from .geometry import Pose
from .vision import Part, PartLabel, SceneObject


def cylinder(radius: float, height: float, z0: float = 0.0, segments: int = 16):
    """Closed cylinder along +z from z0 to z0 + height. Returns (V, F)."""
    a = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([radius * np.cos(a), radius * np.sin(a)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, z0)])
    top = np.column_stack([ring, np.full(segments, z0 + height)])
    V = np.vstack([bottom, top, [[0, 0, z0], [0, 0, z0 + height]]])
    cb, ct = 2 * segments, 2 * segments + 1
    F = []
    for i in range(segments):
        j = (i + 1) % segments
        F += [[i, j, segments + j], [i, segments + j, segments + i]]
        F += [[cb, j, i], [ct, segments + i, segments + j]]
    return V, np.array(F)


def box(size, center=(0.0, 0.0, 0.0)):
    """Axis-aligned box. Returns (V, F)."""
    h = np.asarray(size, dtype=float) / 2
    c = np.asarray(center, dtype=float)
    V = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * h + c
    F = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ])
    return V, F


def icosphere(radius: float, center=(0.0, 0.0, 0.0), subdivisions: int = 3):
    t = (1.0 + 5 ** 0.5) / 2
    V = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    F = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    V = [np.array(v, dtype=float) / np.linalg.norm(v) for v in V]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        newF = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            newF += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = newF
    return np.array(V) * radius + np.asarray(center, dtype=float), np.array(F)


def make_bottle(body_radius: float = 0.035, body_height: float = 0.15,
                cap_radius: float = 0.016, cap_height: float = 0.035,
                segments: int = 16, pose: Pose | None = None) -> SceneObject:
    """Two-part bottle standing on its base at the object origin: the body is
    a side grasp, the cap a top grasp."""
    Vb, Fb = cylinder(body_radius, body_height, 0.0, segments)
    Vc, Fc = cylinder(cap_radius, cap_height, body_height, segments)
    parts = (Part(PartLabel.SIDE_GRASP, Vb, Fb), Part(PartLabel.TOP_GRASP, Vc, Fc))
    return SceneObject(parts, pose or Pose.identity())


def make_sphere_object(radius: float, label: PartLabel = PartLabel.SIDE_GRASP,
                       subdivisions: int = 3, pose: Pose | None = None) -> SceneObject:
    V, F = icosphere(radius, subdivisions=subdivisions)
    return SceneObject((Part(label, V, F),), pose or Pose.identity())


def make_ball_on_stand(ball_radius: float = 0.04, stand_size=(0.10, 0.10, 0.01),
                       subdivisions: int = 2, pose: Pose | None = None) -> SceneObject:
    """A ball to be taken from above, resting on a flat stand that must not be
    grasped."""
    sx, sy, sz = stand_size
    Vs, Fs = box(stand_size, (0.0, 0.0, sz / 2))
    Vb, Fb = icosphere(ball_radius, (0.0, 0.0, sz + ball_radius), subdivisions)
    parts = (Part(PartLabel.NO_GRASP, Vs, Fs), Part(PartLabel.TOP_GRASP, Vb, Fb))
    return SceneObject(parts, pose or Pose.identity())
