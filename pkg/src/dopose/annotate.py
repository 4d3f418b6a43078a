"""Semi-automated annotation core.

A human poses every object once in a reference view; the camera-from-
world transforms of the remaining views turn that single annotation into
per-view 6D ground truth.  Masks and visibility statistics then come
from rendering the posed meshes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bop import (GtEntry, GtInfo, SceneBundle, ViewRecord, gt_info_to_json,
                  mask_image_name, save_mask_image, scene_lock,
                  write_json_atomic)
from .errors import MeshNotFound, MissingWorldTransform
from .geometry import Pose, compose, invert
from .masks import InstanceMask, mask_bbox
from .renderer import TriangleMesh, composite_visible_masks, rasterize

REF_ANNOTATION_FILENAME = "ref_annotation.json"


@dataclass(frozen=True)
class ReferenceAnnotation:
    """Manually annotated object poses in one reference view's camera frame."""

    scene_id: int
    ref_view_id: int
    poses: tuple[tuple[int, Pose], ...]  # (obj_id, cam_from_model)

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))


def save_reference_annotation(path, ann: ReferenceAnnotation) -> None:
    write_json_atomic(Path(path), {
        "scene_id": ann.scene_id,
        "ref_view_id": ann.ref_view_id,
        "poses": [{"obj_id": obj_id,
                   "rotation": pose.flat_rotation(),
                   "translation": pose.flat_translation()}
                  for obj_id, pose in ann.poses],
    })


def load_reference_annotation(path) -> ReferenceAnnotation:
    doc = json.loads(Path(path).read_text())
    return ReferenceAnnotation(
        scene_id=int(doc["scene_id"]),
        ref_view_id=int(doc["ref_view_id"]),
        poses=tuple((int(p["obj_id"]),
                     Pose.from_flat(p["rotation"], p["translation"]))
                    for p in doc["poses"]))


def propagate_poses(ann: ReferenceAnnotation,
                    views: list[ViewRecord]) -> dict[int, list[GtEntry]]:
    """Carry the reference annotation to every view.

    pose_i = world_to_cam_i ∘ (world_to_cam_ref)⁻¹ ∘ pose_ref, so the
    reference view reproduces the input exactly.
    """
    ref = None
    for view in views:
        if view.view_id == ann.ref_view_id:
            ref = view
    if ref is None:
        raise MissingWorldTransform(ann.ref_view_id)
    for view in views:
        if view.world_to_cam is None:
            raise MissingWorldTransform(view.view_id)

    cam_ref_from_world = ref.world_to_cam
    out: dict[int, list[GtEntry]] = {}
    for view in views:
        rel = compose(view.world_to_cam, invert(cam_ref_from_world))
        out[view.view_id] = [
            GtEntry(obj_id=obj_id, cam_from_model=compose(rel, pose_ref))
            for obj_id, pose_ref in ann.poses
        ]
    return out


def generate_ground_truth(scene: SceneBundle,
                          meshes: dict[int, TriangleMesh]
                          ) -> dict[int, tuple[list[InstanceMask],
                                               list[InstanceMask],
                                               list[GtInfo]]]:
    """Render visible/amodal masks and visibility stats for every gt view.

    The valid-depth count uses the captured depth image when the scene
    has one, otherwise the rendered composite depth stands in for it.
    """
    results = {}
    for view in scene.views:
        entries = scene.gt.get(view.view_id)
        if entries is None:
            continue
        for e in entries:
            if e.obj_id not in meshes:
                raise MeshNotFound(e.obj_id)
        buffers = [rasterize(meshes[e.obj_id], e.cam_from_model, view.cam_k)
                   for e in entries]
        visible, amodal = composite_visible_masks(
            [(i, buf) for i, buf in enumerate(buffers)])

        depth_img = scene.depth.get(view.view_id)
        if depth_img is not None and depth_img.shape == (view.cam_k.height,
                                                         view.cam_k.width):
            depth_valid = depth_img > 0
        elif buffers:
            depth_valid = np.isfinite(np.min(
                np.stack([b.values for b in buffers]), axis=0))
        else:
            depth_valid = np.zeros((view.cam_k.height, view.cam_k.width), bool)

        infos = []
        for vis, amo in zip(visible, amodal):
            n_amodal = amo.area
            n_visible = vis.area
            infos.append(GtInfo(
                bbox_amodal=mask_bbox(amo.bits),
                bbox_visible=mask_bbox(vis.bits),
                px_count_amodal=n_amodal,
                px_count_visible=n_visible,
                px_count_valid_depth=int((amo.bits & depth_valid).sum()),
                visib_fract=n_visible / n_amodal if n_amodal > 0 else 0.0,
            ))
        results[view.view_id] = (visible, amodal, infos)
    return results


def write_ground_truth_files(scene_dir, scene: SceneBundle,
                             meshes: dict[int, TriangleMesh]) -> dict[int, list[GtInfo]]:
    """Emit mask/, mask_visib/ and scene_gt_info.json for a scene on disk."""
    scene_dir = Path(scene_dir)
    rendered = generate_ground_truth(scene, meshes)
    with scene_lock(scene_dir):
        info_doc = {}
        for view_id, (visible, amodal, infos) in sorted(rendered.items()):
            for idx, (vis, amo) in enumerate(zip(visible, amodal)):
                save_mask_image(scene_dir / "mask" / mask_image_name(view_id, idx),
                                amo.bits)
                save_mask_image(scene_dir / "mask_visib" / mask_image_name(view_id, idx),
                                vis.bits)
            info_doc[str(view_id)] = [gt_info_to_json(i) for i in infos]
        write_json_atomic(scene_dir / "scene_gt_info.json", info_doc)
    return {vid: infos for vid, (_, _, infos) in rendered.items()}


def write_scene_gt(scene_dir, gt: dict[int, list[GtEntry]]) -> None:
    doc = {str(vid): [{"obj_id": e.obj_id,
                       "cam_R_m2c": e.cam_from_model.flat_rotation(),
                       "cam_t_m2c": e.cam_from_model.flat_translation()}
                      for e in entries]
           for vid, entries in sorted(gt.items())}
    write_json_atomic(Path(scene_dir) / "scene_gt.json", doc)
