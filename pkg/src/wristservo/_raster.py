"""Z-buffered triangle rasterizer (numba kernel).

Pixel (u, v) is sampled at its integer centre. Coverage is inclusive on
edges; on equal depth the first triangle drawn keeps the pixel.
"""
import numpy as np
from numba import njit

NEAR = 1e-3


@njit(cache=True)
def _rasterize(tris, tri_part, width, height, fx, fy, cx, cy, depth, label):
    for t in range(tris.shape[0]):
        z0 = tris[t, 0, 2]
        z1 = tris[t, 1, 2]
        z2 = tris[t, 2, 2]
        u0 = fx * tris[t, 0, 0] / z0 + cx
        v0 = fy * tris[t, 0, 1] / z0 + cy
        u1 = fx * tris[t, 1, 0] / z1 + cx
        v1 = fy * tris[t, 1, 1] / z1 + cy
        u2 = fx * tris[t, 2, 0] / z2 + cx
        v2 = fy * tris[t, 2, 1] / z2 + cy
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area == 0.0:
            continue
        umin = max(int(np.ceil(min(u0, min(u1, u2)))), 0)
        umax = min(int(np.floor(max(u0, max(u1, u2)))), width - 1)
        vmin = max(int(np.ceil(min(v0, min(v1, v2)))), 0)
        vmax = min(int(np.floor(max(v0, max(v1, v2)))), height - 1)
        inv_area = 1.0 / area
        for v in range(vmin, vmax + 1):
            for u in range(umin, umax + 1):
                w0 = ((u1 - u) * (v2 - v) - (u2 - u) * (v1 - v)) * inv_area
                w1 = ((u2 - u) * (v0 - v) - (u0 - u) * (v2 - v)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = 1.0 / (w0 / z0 + w1 / z1 + w2 / z2)
                if z < depth[v, u]:
                    depth[v, u] = z
                    label[v, u] = tri_part[t]


def _clip_near(tri: np.ndarray) -> list:
    """Clip one camera-frame triangle against z = NEAR; returns 0-2 triangles."""
    poly = []
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        ina, inb = a[2] >= NEAR, b[2] >= NEAR
        if ina:
            poly.append(a)
        if ina != inb:
            s = (NEAR - a[2]) / (b[2] - a[2])
            poly.append(a + s * (b - a))
    return [np.array([poly[0], poly[k], poly[k + 1]]) for k in range(1, len(poly) - 1)]


def rasterize(tris: np.ndarray, tri_part: np.ndarray, width: int, height: int,
              fx: float, fy: float, cx: float, cy: float):
    """Render camera-frame triangles (T, 3, 3). Returns (depth, label) images;
    uncovered pixels have depth inf and label -1."""
    tris = np.asarray(tris, dtype=np.float64)
    tri_part = np.asarray(tri_part, dtype=np.int64)
    z = tris[:, :, 2]
    front = (z >= NEAR).all(axis=1)
    mixed = ~front & (z >= NEAR).any(axis=1)
    if mixed.any():
        extra, extra_part = [], []
        for idx in np.flatnonzero(mixed):
            for piece in _clip_near(tris[idx]):
                extra.append(piece)
                extra_part.append(tri_part[idx])
        tris = np.concatenate([tris[front], np.array(extra).reshape(-1, 3, 3)])
        tri_part = np.concatenate([tri_part[front], np.array(extra_part, dtype=np.int64)])
    else:
        tris, tri_part = tris[front], tri_part[front]
    depth = np.full((height, width), np.inf)
    label = np.full((height, width), -1, dtype=np.int64)
    if len(tris):
        _rasterize(np.ascontiguousarray(tris), tri_part, width, height,
                   float(fx), float(fy), float(cx), float(cy), depth, label)
    return depth, label
