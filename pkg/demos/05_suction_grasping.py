"""Compute suction grasps from instance masks and a depth image.

Per mask: deproject the masked depth, find the biggest plane with
RANSAC, take its camera-facing centroid as the grasp position, and build
the approach orientation from the halfway vector between the surface
normal and the view direction.  Masks are tried in confidence order.
"""

import numpy as np

from dopose.geometry import CameraIntrinsics
from dopose.grasping import (RansacConfig, compute_suction_grasp,
                             rank_masks_by_confidence)
from dopose.masks import InstanceMask

k = CameraIntrinsics(fx=120.0, fy=120.0, cx=48.0, cy=48.0, width=96, height=96)
rng = np.random.default_rng(5)

# a flat box top at 420 mm and a 45-degree ramp starting at 520 mm
depth_mm = np.zeros((96, 96))
depth_mm[10:40, 10:40] = 420.0
vs = np.arange(96, dtype=np.float64)
ramp = 520.0 / (1.0 - (vs - k.cy) / k.fy)
depth_mm[50:85, 45:90] = np.tile(ramp[50:85, None], (1, 45))
depth_mm += rng.normal(scale=0.4, size=depth_mm.shape) * (depth_mm > 0)

scale = 0.1
depth = np.rint(np.clip(depth_mm, 0, None) / scale).astype(np.uint16)

flat_mask = np.zeros((96, 96), bool)
flat_mask[10:40, 10:40] = True
ramp_mask = np.zeros((96, 96), bool)
ramp_mask[50:85, 45:90] = True
masks = [InstanceMask(ramp_mask, confidence=0.55, instance_id=2),
         InstanceMask(flat_mask, confidence=0.92, instance_id=1)]

cfg = RansacConfig(iterations=500, inlier_threshold=3.0, min_inliers=50, seed=0)
for mask in rank_masks_by_confidence(masks):
    grasp = compute_suction_grasp(None, depth, k, scale, mask, cfg)
    p = grasp.position
    approach = grasp.approach
    print(f"object {mask.instance_id} (confidence {mask.confidence:.2f}):")
    print(f"  grasp at ({p[0]:6.1f}, {p[1]:6.1f}, {p[2]:6.1f}) mm")
    print(f"  approach axis toward camera: ({approach[0]:+.3f}, "
          f"{approach[1]:+.3f}, {approach[2]:+.3f})")
    print(f"  quality carried from mask confidence: {grasp.quality:.2f}")
