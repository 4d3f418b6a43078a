"""Rigid transforms, pinhole camera math, depth deprojection, and normals.

Conventions used throughout the toolkit:

* all distances are millimeters (BOP native units),
* pixel (u, v) addresses the pixel center, no half-pixel offset,
* raw depth value 0 marks an invalid pixel; loaders map any sentinel
  (NaN, negative) to 0 before the data reaches this module,
* the camera looks along +Z, x right, y down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch

# Construction-time tolerance for rotation matrices.  Our own operations
# keep orthonormality near machine precision; this only guards against
# garbage input (e.g. hand-typed JSON).
ROTATION_ATOL = 1e-6


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_out = rotation @ x_in + translation."""

    rotation: np.ndarray  # (3, 3) orthonormal, det +1
    translation: np.ndarray  # (3,) in mm

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=ROTATION_ATOL):
            raise ValueError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=ROTATION_ATOL):
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _as_readonly(r))
        object.__setattr__(self, "translation", _as_readonly(t))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_flat(rotation9, translation3) -> "Pose":
        """Build from row-major 9-float rotation and 3-float translation."""
        r = np.asarray(rotation9, dtype=np.float64).reshape(3, 3)
        return Pose(r, np.asarray(translation3, dtype=np.float64))

    def flat_rotation(self) -> list[float]:
        return [float(v) for v in self.rotation.reshape(-1)]

    def flat_translation(self) -> list[float]:
        return [float(v) for v in self.translation]


def compose(a: Pose, b: Pose) -> Pose:
    """Pose mapping x to a.R @ (b.R @ x + b.t) + a.t."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -rt @ p.translation)


def transform_points(p: Pose, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ p.rotation.T + p.translation


def axis_rotation(axis: str, angle_rad: float) -> np.ndarray:
    """Elementary rotation matrix about the x, y or z axis."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
    raise ValueError(f"unknown axis {axis!r}")


def quaternion_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix.

    Uses the largest-diagonal branch for numerical stability.
    """
    r = np.asarray(r, dtype=np.float64)
    tr = np.trace(r)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s,
                      0.25 * s,
                      (r[0, 1] + r[1, 0]) / s,
                      (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s,
                      (r[0, 1] + r[1, 0]) / s,
                      0.25 * s,
                      (r[1, 2] + r[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s,
                      (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: u = fx*X/Z + cx, v = fy*Y/Z + cy."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @staticmethod
    def from_k_matrix(k, width: int, height: int) -> "CameraIntrinsics":
        k = np.asarray(k, dtype=np.float64).reshape(3, 3)
        return CameraIntrinsics(fx=float(k[0, 0]), fy=float(k[1, 1]),
                                cx=float(k[0, 2]), cy=float(k[1, 2]),
                                width=int(width), height=int(height))

    def k_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class PointCloud:
    """Points in mm with optional per-point attributes.

    ``normals`` rows are unit vectors; rows of NaN mark points whose
    neighborhood was too degenerate for a stable normal.  ``pixels``
    keeps the (u, v) provenance of deprojected points so masks can be
    projected back onto the image.
    """

    points: np.ndarray  # (N, 3) float64
    colors: np.ndarray | None = None  # (N, 3) uint8
    normals: np.ndarray | None = None  # (N, 3) float64, unit or NaN
    labels: np.ndarray | None = None  # (N,) int
    pixels: np.ndarray | None = None  # (N, 2) int, (u, v)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = len(pts)
        object.__setattr__(self, "points", _as_readonly(pts))
        for name, width, dtype in (("colors", 3, np.uint8),
                                   ("normals", 3, np.float64),
                                   ("labels", 0, np.int64),
                                   ("pixels", 2, np.int64)):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.asarray(val, dtype=dtype)
            val = val.reshape(n) if width == 0 else val.reshape(-1, width)
            if len(val) != n:
                raise DimensionMismatch(f"{name} has {len(val)} entries for {n} points")
            object.__setattr__(self, name, _as_readonly(val))
        if self.normals is not None:
            finite = np.isfinite(self.normals).all(axis=1)
            lengths = np.linalg.norm(self.normals[finite], axis=1)
            if finite.any() and not np.allclose(lengths, 1.0, atol=1e-6):
                raise ValueError("normals must have unit length")

    def __len__(self) -> int:
        return len(self.points)


def deproject(depth: np.ndarray, k: CameraIntrinsics, depth_scale: float,
              mask: np.ndarray | None = None,
              rgb: np.ndarray | None = None) -> PointCloud:
    """Back-project valid depth pixels to camera-frame points.

    Z = raw * depth_scale, X = (u - cx) * Z / fx, Y = (v - cy) * Z / fy.
    Pixels with raw depth 0 (or non-finite) are skipped.
    """
    depth = np.asarray(depth)
    if depth.shape != (k.height, k.width):
        raise DimensionMismatch(
            f"depth shape {depth.shape} != intrinsics ({k.height}, {k.width})")
    valid = np.isfinite(depth) & (depth > 0)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth.shape:
            raise DimensionMismatch(
                f"mask shape {mask.shape} != depth shape {depth.shape}")
        valid &= mask
    v_idx, u_idx = np.nonzero(valid)
    z = depth[v_idx, u_idx].astype(np.float64) * depth_scale
    x = (u_idx - k.cx) * z / k.fx
    y = (v_idx - k.cy) * z / k.fy
    colors = None
    if rgb is not None:
        rgb = np.asarray(rgb)
        if rgb.shape[:2] != depth.shape:
            raise DimensionMismatch("rgb does not match depth dimensions")
        colors = rgb[v_idx, u_idx]
    return PointCloud(points=np.column_stack([x, y, z]), colors=colors,
                      pixels=np.column_stack([u_idx, v_idx]))


def project(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points to continuous pixel coordinates (u, v)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    u = k.fx * points[:, 0] / z + k.cx
    v = k.fy * points[:, 1] / z + k.cy
    return np.column_stack([u, v])


def estimate_normals(cloud: PointCloud, k_neighbors: int,
                     viewpoint) -> PointCloud:
    """Per-point normals from the covariance of the k nearest neighbors.

    The normal is the smallest-eigenvalue eigenvector, sign-flipped so it
    points toward ``viewpoint``.  Points whose neighborhood is collinear
    (covariance rank < 2) get a NaN normal.
    """
    if k_neighbors < 3:
        raise ValueError("k_neighbors must be >= 3")
    if len(cloud) < k_neighbors:
        raise ValueError(f"cloud has {len(cloud)} points, need >= {k_neighbors}")
    viewpoint = np.asarray(viewpoint, dtype=np.float64).reshape(3)
    pts = cloud.points
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k_neighbors)

    neighborhoods = pts[idx]  # (N, k, 3)
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k_neighbors
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending eigenvalues

    normals = eigvecs[:, :, 0].copy()
    # Rank < 2: the second eigenvalue is negligible against the largest.
    scale = np.maximum(eigvals[:, 2], 1e-30)
    degenerate = eigvals[:, 1] <= 1e-12 * scale
    normals[degenerate] = np.nan

    to_view = viewpoint - pts
    flip = np.einsum("ni,ni->n", normals, to_view) < 0
    normals[flip & ~degenerate] *= -1.0
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        normals = normals / lengths
    return PointCloud(points=pts, colors=cloud.colors, normals=normals,
                      labels=cloud.labels, pixels=cloud.pixels)
