"""Deterministic software rasterizer for silhouette and depth rendering.

Coverage rule: a pixel is filled iff its center (integer coordinates)
lies inside the projected triangle, with the top-left rule deciding
shared edges.  Depth is interpolated perspective-correctly (1/Z is
affine in screen space).  Triangles are clipped against a near plane at
1 mm; anything fully behind it is culled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import CameraIntrinsics, Pose, transform_points
from .masks import InstanceMask

NEAR_PLANE_MM = 1.0
NO_SURFACE = np.inf


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup in the model frame, positions in mm."""

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int vertex indices

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)


@dataclass
class DepthBuffer:
    """Per-pixel depth in mm; NO_SURFACE (inf) where nothing was hit."""

    values: np.ndarray  # (H, W) float64

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def coverage(self) -> np.ndarray:
        return np.isfinite(self.values)


def _clip_near(pts: np.ndarray, near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against Z >= near."""
    inside = pts[:, 2] > near
    if inside.all():
        return [pts]
    if not inside.any():
        return []
    poly = []
    for i in range(3):
        cur, nxt = pts[i], pts[(i + 1) % 3]
        cur_in, nxt_in = inside[i], inside[(i + 1) % 3]
        if cur_in:
            poly.append(cur)
        if cur_in != nxt_in:
            t = (near - cur[2]) / (nxt[2] - cur[2])
            poly.append(cur + t * (nxt - cur))
    if len(poly) < 3:
        return []
    poly = np.asarray(poly)
    return [poly[[0, i, i + 1]] for i in range(1, len(poly) - 1)]


def _edge(a, b, px, py):
    return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])


def _is_top_left(a, b) -> bool:
    # y grows downward and the triangle is oriented so interiors are
    # positive: top edges run +x at constant y, left edges run -y.
    return (a[1] == b[1] and b[0] > a[0]) or (b[1] < a[1])


def _raster_triangle(values: np.ndarray, pts: np.ndarray, k: CameraIntrinsics):
    z = pts[:, 2]
    u = k.fx * pts[:, 0] / z + k.cx
    v = k.fy * pts[:, 1] / z + k.cy
    scr = np.column_stack([u, v])
    area2 = _edge(scr[0], scr[1], scr[2, 0], scr[2, 1])
    if area2 == 0.0:
        return
    if area2 < 0.0:
        scr = scr[[0, 2, 1]]
        z = z[[0, 2, 1]]
        area2 = -area2

    x0 = max(0, int(np.ceil(scr[:, 0].min())))
    x1 = min(k.width - 1, int(np.floor(scr[:, 0].max())))
    y0 = max(0, int(np.ceil(scr[:, 1].min())))
    y1 = min(k.height - 1, int(np.floor(scr[:, 1].max())))
    if x0 > x1 or y0 > y1:
        return

    px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    w0 = _edge(scr[1], scr[2], px, py)
    w1 = _edge(scr[2], scr[0], px, py)
    w2 = _edge(scr[0], scr[1], px, py)

    cover = np.ones(np.broadcast_shapes(w0.shape, w1.shape, w2.shape), dtype=bool)
    for w, a, b in ((w0, scr[1], scr[2]), (w1, scr[2], scr[0]), (w2, scr[0], scr[1])):
        if _is_top_left(a, b):
            cover &= w >= 0
        else:
            cover &= w > 0
    if not cover.any():
        return

    inv_z = (w0 / z[0] + w1 / z[1] + w2 / z[2]) / area2
    with np.errstate(divide="ignore", over="ignore"):
        depth = 1.0 / inv_z
    region = values[y0:y1 + 1, x0:x1 + 1]
    update = cover & (depth < region)
    region[update] = depth[update]


def rasterize(mesh: TriangleMesh, pose: Pose, k: CameraIntrinsics) -> DepthBuffer:
    """Z-buffered perspective rendering of a mesh posed in the camera frame."""
    values = np.full((k.height, k.width), NO_SURFACE, dtype=np.float64)
    if len(mesh.triangles) == 0:
        return DepthBuffer(values)
    cam_pts = transform_points(pose, mesh.vertices)
    for tri in mesh.triangles:
        for clipped in _clip_near(cam_pts[tri], NEAR_PLANE_MM):
            _raster_triangle(values, clipped, k)
    return DepthBuffer(values)


def composite_visible_masks(buffers: list[tuple[int, DepthBuffer]]
                            ) -> tuple[list[InstanceMask], list[InstanceMask]]:
    """Split per-object depth buffers into visible and amodal masks.

    Visible pixels are those where the object is strictly nearest among
    all buffers; depth ties go to the lower instance id.  Output lists
    are aligned with the input order.
    """
    if not buffers:
        return [], []
    shape = buffers[0][1].values.shape
    for _, buf in buffers:
        if buf.values.shape != shape:
            raise DimensionMismatch("depth buffers have differing shapes")
    ids = np.array([i for i, _ in buffers])
    stack = np.stack([b.values for _, b in buffers])
    nearest = stack.min(axis=0)

    visible: list = [None] * len(buffers)
    claimed = np.zeros(shape, dtype=bool)
    for pos in np.argsort(ids, kind="stable"):
        covered = np.isfinite(stack[pos])
        vis = covered & (stack[pos] == nearest) & ~claimed
        claimed |= vis
        visible[pos] = vis

    visible_masks = [InstanceMask(visible[i], instance_id=int(ids[i]))
                     for i in range(len(buffers))]
    amodal_masks = [InstanceMask(np.isfinite(stack[i]), instance_id=int(ids[i]))
                    for i in range(len(buffers))]
    return visible_masks, amodal_masks


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbor outside the mask."""
    interior = mask.copy()
    interior[1:, :] &= mask[:-1, :]
    interior[:-1, :] &= mask[1:, :]
    interior[:, 1:] &= mask[:, :-1]
    interior[:, :-1] &= mask[:, 1:]
    interior[0, :] = False
    interior[-1, :] = False
    interior[:, 0] = False
    interior[:, -1] = False
    return mask & ~interior


def render_overlay(rgb: np.ndarray, mesh: TriangleMesh, pose: Pose,
                   k: CameraIntrinsics, tint=(255, 64, 64),
                   alpha: float = 0.5) -> np.ndarray:
    """Blend the posed mesh silhouette over an rgb image.

    Interior pixels get (1-alpha)*rgb + alpha*tint; the silhouette
    boundary is drawn at full opacity.
    """
    rgb = np.asarray(rgb)
    if rgb.shape[:2] != (k.height, k.width):
        raise DimensionMismatch(
            f"rgb shape {rgb.shape[:2]} != intrinsics ({k.height}, {k.width})")
    silhouette = rasterize(mesh, pose, k).coverage()
    out = rgb.astype(np.float64).copy()
    if not silhouette.any():
        return rgb.copy()
    tint = np.asarray(tint, dtype=np.float64)
    out[silhouette] = (1.0 - alpha) * out[silhouette] + alpha * tint
    out[_boundary(silhouette)] = tint
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
