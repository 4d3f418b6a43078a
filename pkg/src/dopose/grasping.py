"""Suction grasp computation from an instance mask and an RGB-D frame.

Pipeline per mask: deproject the masked depth pixels, find the biggest
plane with RANSAC, take the plane's inlier centroid (projected onto the
plane) as the grasp position, and build the approach orientation from
the halfway vector between the camera-facing plane normal and the view
direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, NoPlaneFound, TooFewPoints
from .geometry import (CameraIntrinsics, PointCloud, deproject,
                       quaternion_from_rotation)
from .masks import InstanceMask

CAMERA_ORIGIN = np.zeros(3)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 500
    inlier_threshold: float = 3.0  # mm
    min_inliers: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")


@dataclass(frozen=True)
class PlaneModel:
    """Plane {x : normal . x = offset} with its supporting inliers."""

    normal: np.ndarray  # unit 3-vector
    offset: float  # mm
    inliers: np.ndarray  # indices into the source cloud

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            n = n / norm
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "inliers",
                           np.asarray(self.inliers, dtype=np.int64))

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal - self.offset)


@dataclass(frozen=True)
class GraspPose:
    """Suction grasp in the camera frame."""

    position: np.ndarray  # (3,) mm
    orientation: np.ndarray  # (3, 3), tool axes in camera coordinates
    quality: float  # carried over from the mask confidence

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=np.float64).reshape(3))
        r = np.asarray(self.orientation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise ValueError("orientation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("orientation is left-handed")
        object.__setattr__(self, "orientation", r)

    @property
    def approach(self) -> np.ndarray:
        """Unit vector from the surface toward the camera side (-Z column)."""
        return -self.orientation[:, 2]

    def to_dict(self) -> dict:
        return {
            "position_mm": [float(v) for v in self.position],
            "rotation": [float(v) for v in self.orientation.reshape(-1)],
            "quaternion_wxyz": [float(v) for v in
                                quaternion_from_rotation(self.orientation)],
            "quality": float(self.quality),
        }


def _fit_plane_3pt(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, float(n @ p0)


def _least_squares_plane(points: np.ndarray):
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    return normal, float(normal @ centroid)


def segment_biggest_plane(cloud: PointCloud, cfg: RansacConfig) -> PlaneModel:
    """RANSAC plane search, deterministic for a fixed seed.

    Index sampling is independent of coordinates, so a rigid transform
    of the cloud yields the transformed plane for the same seed.
    """
    points = cloud.points
    n = len(points)
    if n < 3:
        raise TooFewPoints(f"plane fit needs >= 3 points, got {n}")
    rng = np.random.default_rng(cfg.seed)

    best_count = 0
    best_model = None
    for _ in range(cfg.iterations):
        idx = rng.choice(n, size=3, replace=False)
        fit = _fit_plane_3pt(*points[idx])
        if fit is None:
            continue  # collinear sample
        normal, offset = fit
        count = int((np.abs(points @ normal - offset)
                     <= cfg.inlier_threshold).sum())
        if count > best_count:
            best_count = count
            best_model = (normal, offset)

    if best_model is None or best_count < cfg.min_inliers:
        raise NoPlaneFound(
            f"best plane has {best_count} inliers, need {cfg.min_inliers}")

    # One refinement round: least-squares fit on the inliers, recollect.
    normal, offset = best_model
    inliers = np.flatnonzero(np.abs(points @ normal - offset)
                             <= cfg.inlier_threshold)
    ls_normal, ls_offset = _least_squares_plane(points[inliers])
    refined = np.flatnonzero(np.abs(points @ ls_normal - ls_offset)
                             <= cfg.inlier_threshold)
    if len(refined) >= 3:
        normal, offset, inliers = ls_normal, ls_offset, refined
    return PlaneModel(normal=normal, offset=offset, inliers=inliers)


def orient_toward(plane: PlaneModel, reference_point) -> PlaneModel:
    """Flip the plane normal so it points toward the reference point."""
    reference_point = np.asarray(reference_point, dtype=np.float64)
    anchor = plane.normal * plane.offset  # a point on the plane
    if plane.normal @ (reference_point - anchor) < 0:
        return PlaneModel(normal=-plane.normal, offset=-plane.offset,
                          inliers=plane.inliers)
    return plane


def plane_center(plane: PlaneModel, cloud: PointCloud) -> np.ndarray:
    """Inlier centroid, projected orthogonally onto the plane."""
    if len(plane.inliers) == 0:
        raise TooFewPoints("plane has no inliers")
    centroid = cloud.points[plane.inliers].mean(axis=0)
    return centroid - (centroid @ plane.normal - plane.offset) * plane.normal


def halfway_orientation(normal: np.ndarray, center: np.ndarray,
                        camera_origin=CAMERA_ORIGIN,
                        reference_axes=None) -> np.ndarray:
    """Full tool orientation from a camera-facing surface normal.

    The approach axis is the halfway vector h between the normal and the
    unit vector toward the camera.  The rotation's Z column is -h; the Y
    column fixes the remaining spin by projecting the first reference
    axis (default: camera Y) onto the plane orthogonal to h.  When that
    axis is within 1e-6 of parallel to h, the next reference (default:
    camera X) takes over.
    """
    normal = np.asarray(normal, dtype=np.float64).reshape(3)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    camera_origin = np.asarray(camera_origin, dtype=np.float64).reshape(3)
    to_camera = camera_origin - center
    to_camera = to_camera / np.linalg.norm(to_camera)
    if normal @ to_camera <= 0:
        raise ValueError("normal must be oriented toward the camera")
    h = normal + to_camera
    h = h / np.linalg.norm(h)

    if reference_axes is None:
        reference_axes = (np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    z_col = -h
    for reference in reference_axes:
        reference = np.asarray(reference, dtype=np.float64)
        y_col = reference - (reference @ h) * h
        norm = np.linalg.norm(y_col)
        if norm > 1e-6:
            y_col = y_col / norm
            break
    else:
        raise ValueError("all reference axes are parallel to the approach axis")
    x_col = np.cross(y_col, z_col)
    return np.column_stack([x_col, y_col, z_col])


def compute_suction_grasp(rgb: np.ndarray | None, depth: np.ndarray,
                          k: CameraIntrinsics, depth_scale: float,
                          mask: InstanceMask, cfg: RansacConfig | None = None
                          ) -> GraspPose:
    """Grasp pose for one instance mask; see the module docstring."""
    cfg = cfg or RansacConfig()
    if mask.area == 0:
        raise EmptyMask("mask has no pixels")
    cloud = deproject(depth, k, depth_scale, mask=mask.bits, rgb=rgb)
    if len(cloud) < cfg.min_inliers:
        raise TooFewPoints(
            f"mask covers {len(cloud)} valid depth pixels, "
            f"need {cfg.min_inliers}")
    plane = segment_biggest_plane(cloud, cfg)
    plane = orient_toward(plane, CAMERA_ORIGIN)
    center = plane_center(plane, cloud)
    orientation = halfway_orientation(plane.normal, center)
    quality = mask.confidence if mask.confidence is not None else 1.0
    return GraspPose(position=center, orientation=orientation, quality=quality)


def rank_masks_by_confidence(masks: list[InstanceMask]) -> list[InstanceMask]:
    """Stable descending sort; masks without confidence keep order, last."""
    with_conf = [m for m in masks if m.confidence is not None]
    without = [m for m in masks if m.confidence is None]
    with_conf.sort(key=lambda m: -m.confidence)
    return with_conf + without
