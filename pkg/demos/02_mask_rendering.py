"""Render depth buffers, occlusion-aware masks, and an annotation overlay.

The rasterizer is deterministic and exact at pixel centers, which is what
makes rendered masks usable as ground truth.
"""

import tempfile
from pathlib import Path

import numpy as np

from dopose.bop import save_image_atomic
from dopose.geometry import CameraIntrinsics, Pose
from dopose.renderer import composite_visible_masks, rasterize, render_overlay
from dopose.synthetic import box_mesh

k = CameraIntrinsics(fx=160.0, fy=160.0, cx=64.0, cy=64.0, width=128, height=128)

near_box = box_mesh((90.0, 90.0, 90.0), center=(-30.0, 0.0, 450.0))
far_box = box_mesh((120.0, 120.0, 120.0), center=(40.0, 10.0, 650.0))

buffers = [(1, rasterize(near_box, Pose.identity(), k)),
           (2, rasterize(far_box, Pose.identity(), k))]
for obj_id, buf in buffers:
    covered = buf.coverage()
    print(f"object {obj_id}: {covered.sum()} covered pixels, "
          f"depth range [{buf.values[covered].min():.0f}, "
          f"{buf.values[covered].max():.0f}] mm")

visible, amodal = composite_visible_masks(buffers)
for v, a in zip(visible, amodal):
    frac = v.area / a.area if a.area else 0.0
    print(f"object {v.instance_id}: amodal {a.area} px, visible {v.area} px "
          f"({100 * frac:.1f}% unoccluded)")

# overlay the occluded box on a flat background, as the annotation UI would
rgb = np.full((128, 128, 3), 70, dtype=np.uint8)
overlay = render_overlay(rgb, far_box, Pose.identity(), k,
                         tint=(60, 170, 240), alpha=0.45)
out = Path(tempfile.mkdtemp(prefix="dopose_demo_")) / "overlay.png"
save_image_atomic(out, overlay)
print(f"\noverlay image written to {out}")
