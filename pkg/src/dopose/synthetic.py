"""Synthetic desk-scale scenes for demos and end-to-end checks.

Builds a complete miniature dataset on disk: box meshes, a ring of
calibrated views around a tabletop, rendered depth/rgb images, world
transforms, and a reference-view annotation ready for propagation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotate import ReferenceAnnotation, save_reference_annotation
from .bop import (SceneBundle, ViewRecord, save_models, save_scene,
                  scene_dir_name, write_dataset_camera)
from .geometry import CameraIntrinsics, Pose, compose
from .renderer import TriangleMesh, rasterize

_BOX_FACES = [
    (0, 1, 2), (0, 2, 3),  # -z
    (4, 6, 5), (4, 7, 6),  # +z
    (0, 4, 5), (0, 5, 1),  # -y
    (3, 2, 6), (3, 6, 7),  # +y
    (1, 5, 6), (1, 6, 2),  # +x
    (0, 3, 7), (0, 7, 4),  # -x
]


def box_mesh(extents, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box (12 triangles) in mm."""
    ex, ey, ez = [e / 2.0 for e in extents]
    cx, cy, cz = center
    corners = np.array([
        [cx - ex, cy - ey, cz - ez],
        [cx + ex, cy - ey, cz - ez],
        [cx + ex, cy + ey, cz - ez],
        [cx - ex, cy + ey, cz - ez],
        [cx - ex, cy - ey, cz + ez],
        [cx + ex, cy - ey, cz + ez],
        [cx + ex, cy + ey, cz + ez],
        [cx - ex, cy + ey, cz + ez],
    ])
    return TriangleMesh(vertices=corners, triangles=np.array(_BOX_FACES))


def look_at_pose(position, target, up_hint=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-from-world pose for a camera at ``position`` facing ``target``."""
    position = np.asarray(position, dtype=np.float64)
    z_c = np.asarray(target, dtype=np.float64) - position
    z_c = z_c / np.linalg.norm(z_c)
    up = np.asarray(up_hint, dtype=np.float64)
    if abs(z_c @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    x_c = np.cross(z_c, up)
    x_c = x_c / np.linalg.norm(x_c)
    y_c = np.cross(z_c, x_c)
    rot = np.stack([x_c, y_c, z_c])  # rows: camera axes in world coords
    return Pose(rot, -rot @ position)


@dataclass
class DemoScene:
    root: Path
    split: str
    scene_id: int
    scene_dir: Path
    annotation_path: Path
    object_world_poses: dict[int, Pose]
    reference: ReferenceAnnotation
    bundle: SceneBundle


def build_demo_dataset(root, n_views: int = 4, image_size: int = 128,
                       split: str = "train", scene_id: int = 0,
                       depth_scale: float = 0.1) -> DemoScene:
    """Create a two-box tabletop dataset under ``root`` and return its layout."""
    root = Path(root)
    k = CameraIntrinsics(fx=160.0, fy=160.0, cx=image_size / 2.0,
                         cy=image_size / 2.0, width=image_size,
                         height=image_size)

    meshes = {
        1: box_mesh((80.0, 80.0, 80.0)),
        2: box_mesh((60.0, 60.0, 60.0)),
    }
    object_world = {
        1: Pose(np.eye(3), np.array([-30.0, -20.0, 40.0])),
        2: Pose(np.eye(3), np.array([60.0, 30.0, 30.0])),
    }
    ground = box_mesh((700.0, 700.0, 20.0), center=(0.0, 0.0, -10.0))
    tints = {1: np.array([200, 90, 60]), 2: np.array([70, 130, 200])}

    # view 0 straight above the table, the rest on a ring
    positions = [np.array([0.0, 0.0, 620.0])]
    for i in range(1, n_views):
        ang = 2 * np.pi * i / max(n_views - 1, 1)
        positions.append(np.array([430.0 * np.cos(ang),
                                   430.0 * np.sin(ang), 480.0]))

    views, rgb_imgs, depth_imgs = [], {}, {}
    for vid, pos in enumerate(positions):
        world_to_cam = look_at_pose(pos, target=(0.0, 0.0, 0.0))
        views.append(ViewRecord(view_id=vid, cam_k=k,
                                depth_scale=depth_scale,
                                world_to_cam=world_to_cam))
        buffers = {}
        for obj_id, mesh in meshes.items():
            cam_from_model = compose(world_to_cam, object_world[obj_id])
            buffers[obj_id] = rasterize(mesh, cam_from_model, k).values
        ground_depth = rasterize(ground, world_to_cam, k).values
        scene_depth = np.minimum(ground_depth,
                                 np.min(np.stack(list(buffers.values())), axis=0))

        depth_raw = np.where(np.isfinite(scene_depth),
                             np.rint(scene_depth / depth_scale), 0)
        depth_imgs[vid] = depth_raw.astype(np.uint16)

        rgb = np.full((image_size, image_size, 3), 60, dtype=np.uint8)
        rgb[np.isfinite(ground_depth) & (ground_depth == scene_depth)] = 90
        for obj_id, buf in buffers.items():
            visible = np.isfinite(buf) & (buf == scene_depth)
            rgb[visible] = tints[obj_id]
        rgb_imgs[vid] = rgb

    bundle = SceneBundle(scene_id=scene_id, views=views,
                         rgb=rgb_imgs, depth=depth_imgs)
    scene_dir = root / split / scene_dir_name(scene_id)
    save_scene(bundle, scene_dir)
    save_models(root, meshes)
    write_dataset_camera(root, k, depth_scale)

    ref_view = views[0]
    reference = ReferenceAnnotation(
        scene_id=scene_id, ref_view_id=0,
        poses=tuple((obj_id, compose(ref_view.world_to_cam, object_world[obj_id]))
                    for obj_id in sorted(meshes)))
    annotation_path = scene_dir / "ref_annotation.json"
    save_reference_annotation(annotation_path, reference)

    return DemoScene(root=root, split=split, scene_id=scene_id,
                     scene_dir=scene_dir, annotation_path=annotation_path,
                     object_world_poses=object_world, reference=reference,
                     bundle=bundle)
