"""BOP dataset directory layout: parsing, emission, and exports.

Layout handled here::

    <root>/camera.json
    <root>/models/obj_XXXXXX.ply
    <root>/<split>/<scene>/scene_camera.json
                           scene_gt.json
                           scene_gt_info.json
                           scene_world.json        (non-standard extension)
                           rgb/XXXXXX.png           8-bit, 3 channels
                           depth/XXXXXX.png         16-bit, 1 channel
                           mask/XXXXXX_YYYYYY.png   255 = inside
                           mask_visib/XXXXXX_YYYYYY.png

``scene_world.json`` stores the camera-from-world transform per view as
``{"<view_id>": {"rotation": [9 row-major], "translation": [3 mm]}}``.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import imageio.v3 as iio
import numpy as np

from .errors import (DimensionMismatch, InconsistentViewIds, MalformedFile,
                     MeshNotFound, MissingImage, SceneLocked)
from .geometry import CameraIntrinsics, PointCloud, Pose, deproject
from .masks import InstanceMask, mask_bbox, masks_disjoint, rle_encode
from .meshio import load_mesh_ply, save_mesh_ply
from .renderer import TriangleMesh

LOCK_FILENAME = ".dopose_lock"


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class ViewRecord:
    """Per-view camera: intrinsics, depth scale, camera-from-world pose."""

    view_id: int
    cam_k: CameraIntrinsics
    depth_scale: float  # mm per raw depth unit
    world_to_cam: Pose | None = None

    def __post_init__(self):
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be positive")


@dataclass(frozen=True)
class GtEntry:
    """Ground-truth 6D pose of one object in one view's camera frame."""

    obj_id: int
    cam_from_model: Pose


@dataclass(frozen=True)
class GtInfo:
    """Visibility statistics accompanying one ground-truth entry."""

    bbox_amodal: tuple[int, int, int, int]
    bbox_visible: tuple[int, int, int, int]
    px_count_amodal: int
    px_count_visible: int
    px_count_valid_depth: int
    visib_fract: float

    def __post_init__(self):
        if self.px_count_visible > self.px_count_amodal:
            raise ValueError("visible pixel count exceeds amodal pixel count")
        expected = (self.px_count_visible / self.px_count_amodal
                    if self.px_count_amodal > 0 else 0.0)
        if abs(self.visib_fract - expected) > 1e-9:
            raise ValueError("visib_fract inconsistent with pixel counts")


@dataclass
class SceneBundle:
    """All metadata and pixel data of one scene, loaded eagerly."""

    scene_id: int
    views: list[ViewRecord]
    gt: dict[int, list[GtEntry]] = field(default_factory=dict)
    gt_info: dict[int, list[GtInfo]] = field(default_factory=dict)
    rgb: dict[int, np.ndarray] = field(default_factory=dict)
    depth: dict[int, np.ndarray] = field(default_factory=dict)

    def view_ids(self) -> list[int]:
        return [v.view_id for v in self.views]

    def view(self, view_id: int) -> ViewRecord:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise KeyError(f"no view {view_id}")

    @property
    def has_world_transforms(self) -> bool:
        return all(v.world_to_cam is not None for v in self.views) and bool(self.views)

    def validate(self):
        ids = self.view_ids()
        if len(set(ids)) != len(ids):
            raise InconsistentViewIds(f"duplicate view ids in scene {self.scene_id}")
        for vid in self.gt:
            if vid not in ids:
                raise InconsistentViewIds(f"gt references unknown view {vid}")
            rgb, depth = self.rgb.get(vid), self.depth.get(vid)
            if rgb is None or depth is None:
                raise MissingImage(f"view {vid} has gt but lacks rgb/depth images")
            if rgb.shape[:2] != depth.shape[:2]:
                raise DimensionMismatch(
                    f"view {vid}: rgb {rgb.shape[:2]} vs depth {depth.shape[:2]}")


# ---------------------------------------------------------------------------
# file helpers

def view_image_name(view_id: int) -> str:
    return f"{view_id:06d}.png"


def mask_image_name(view_id: int, gt_index: int) -> str:
    return f"{view_id:06d}_{gt_index:06d}.png"


def scene_dir_name(scene_id: int) -> str:
    return f"{scene_id:06d}"


def model_path(root, obj_id: int) -> Path:
    return Path(root) / "models" / f"obj_{obj_id:06d}.ply"


def write_bytes_atomic(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp_", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, payload) -> None:
    write_bytes_atomic(Path(path), json.dumps(payload, indent=1).encode("utf-8"))


def save_image_atomic(path, array: np.ndarray) -> None:
    path = Path(path)
    data = iio.imwrite("<bytes>", array, extension=path.suffix)
    write_bytes_atomic(path, data)


def load_rgb(path) -> np.ndarray:
    arr = iio.imread(path)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr.astype(np.uint8)


def load_depth(path) -> np.ndarray:
    """16-bit depth image; any negative/non-finite values become invalid (0)."""
    arr = np.asarray(iio.imread(path))
    if arr.ndim != 2:
        raise MalformedFile(path, reason="depth image is not single-channel")
    arr = np.where(np.isfinite(arr) & (arr >= 0), arr, 0)
    return arr.astype(np.uint16)


def save_mask_image(path, bits: np.ndarray) -> None:
    save_image_atomic(path, np.where(bits, 255, 0).astype(np.uint8))


def load_mask_image(path) -> np.ndarray:
    return np.asarray(iio.imread(path)) > 127


@contextmanager
def scene_lock(scene_dir):
    """Advisory exclusive lock for writers of one scene directory."""
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    lock_path = scene_dir / LOCK_FILENAME
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise SceneLocked(f"{scene_dir} is locked by another writer") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock_path)
        except FileNotFoundError:
            pass


# ---------------------------------------------------------------------------
# scene load / save

def _require(entry: dict, key: str, path, view_key):
    if key not in entry:
        raise MalformedFile(path, key=view_key, reason=f"missing {key!r}")
    return entry[key]


def load_scene(path) -> SceneBundle:
    """Parse one scene directory into a fully populated SceneBundle."""
    path = Path(path)
    cam_path = path / "scene_camera.json"
    if not cam_path.exists():
        raise MalformedFile(cam_path, reason="file not found")
    try:
        cam_doc = json.loads(cam_path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedFile(cam_path, reason=str(e)) from e

    world_doc = {}
    world_path = path / "scene_world.json"
    if world_path.exists():
        world_doc = json.loads(world_path.read_text())

    try:
        scene_id = int(path.name)
    except ValueError:
        scene_id = 0

    views: list[ViewRecord] = []
    rgb: dict[int, np.ndarray] = {}
    depth: dict[int, np.ndarray] = {}
    for key in sorted(cam_doc, key=int):
        view_id = int(key)
        entry = cam_doc[key]
        cam_k = _require(entry, "cam_K", cam_path, key)
        depth_scale = _require(entry, "depth_scale", cam_path, key)
        rgb_path = path / "rgb" / view_image_name(view_id)
        depth_path = path / "depth" / view_image_name(view_id)
        if not rgb_path.exists():
            raise MissingImage(str(rgb_path))
        if not depth_path.exists():
            raise MissingImage(str(depth_path))
        rgb_img = load_rgb(rgb_path)
        depth_img = load_depth(depth_path)
        if rgb_img.shape[:2] != depth_img.shape:
            raise MalformedFile(depth_path, reason="dimensions differ from rgb")
        h, w = depth_img.shape
        try:
            intr = CameraIntrinsics.from_k_matrix(cam_k, width=w, height=h)
        except (ValueError, TypeError) as e:
            raise MalformedFile(cam_path, key=key, reason=str(e)) from e
        world = None
        if key in world_doc:
            wentry = world_doc[key]
            world = Pose.from_flat(_require(wentry, "rotation", world_path, key),
                                   _require(wentry, "translation", world_path, key))
        views.append(ViewRecord(view_id=view_id, cam_k=intr,
                                depth_scale=float(depth_scale), world_to_cam=world))
        rgb[view_id] = rgb_img
        depth[view_id] = depth_img

    known = {v.view_id for v in views}
    for key in world_doc:
        if int(key) not in known:
            raise InconsistentViewIds(f"scene_world has unknown view {key}")

    gt: dict[int, list[GtEntry]] = {}
    gt_path = path / "scene_gt.json"
    if gt_path.exists():
        gt_doc = json.loads(gt_path.read_text())
        for key, entries in gt_doc.items():
            view_id = int(key)
            if view_id not in known:
                raise InconsistentViewIds(f"scene_gt has unknown view {key}")
            gt[view_id] = [
                GtEntry(obj_id=int(_require(e, "obj_id", gt_path, key)),
                        cam_from_model=Pose.from_flat(
                            _require(e, "cam_R_m2c", gt_path, key),
                            _require(e, "cam_t_m2c", gt_path, key)))
                for e in entries
            ]

    gt_info: dict[int, list[GtInfo]] = {}
    info_path = path / "scene_gt_info.json"
    if info_path.exists():
        info_doc = json.loads(info_path.read_text())
        for key, entries in info_doc.items():
            view_id = int(key)
            if view_id not in known:
                raise InconsistentViewIds(f"scene_gt_info has unknown view {key}")
            gt_info[view_id] = [
                GtInfo(bbox_amodal=tuple(e["bbox_obj"]),
                       bbox_visible=tuple(e["bbox_visib"]),
                       px_count_amodal=int(e["px_count_all"]),
                       px_count_visible=int(e["px_count_visib"]),
                       px_count_valid_depth=int(e["px_count_valid"]),
                       visib_fract=float(e["visib_fract"]))
                for e in entries
            ]

    bundle = SceneBundle(scene_id=scene_id, views=views, gt=gt, gt_info=gt_info,
                         rgb=rgb, depth=depth)
    bundle.validate()
    return bundle


def gt_info_to_json(info: GtInfo) -> dict:
    return {
        "bbox_obj": list(info.bbox_amodal),
        "bbox_visib": list(info.bbox_visible),
        "px_count_all": info.px_count_amodal,
        "px_count_visib": info.px_count_visible,
        "px_count_valid": info.px_count_valid_depth,
        "visib_fract": info.visib_fract,
    }


def save_scene(bundle: SceneBundle, path) -> None:
    """Write a scene directory; load_scene(save_scene(b)) reproduces b."""
    bundle.validate()
    path = Path(path)
    with scene_lock(path):
        cam_doc = {}
        world_doc = {}
        for view in bundle.views:
            k = view.cam_k
            cam_doc[str(view.view_id)] = {
                "cam_K": [float(x) for x in k.k_matrix().reshape(-1)],
                "depth_scale": float(view.depth_scale),
            }
            if view.world_to_cam is not None:
                world_doc[str(view.view_id)] = {
                    "rotation": view.world_to_cam.flat_rotation(),
                    "translation": view.world_to_cam.flat_translation(),
                }
        write_json_atomic(path / "scene_camera.json", cam_doc)
        if world_doc:
            write_json_atomic(path / "scene_world.json", world_doc)
        if bundle.gt:
            gt_doc = {
                str(vid): [{"obj_id": e.obj_id,
                            "cam_R_m2c": e.cam_from_model.flat_rotation(),
                            "cam_t_m2c": e.cam_from_model.flat_translation()}
                           for e in entries]
                for vid, entries in sorted(bundle.gt.items())
            }
            write_json_atomic(path / "scene_gt.json", gt_doc)
        if bundle.gt_info:
            info_doc = {str(vid): [gt_info_to_json(i) for i in infos]
                        for vid, infos in sorted(bundle.gt_info.items())}
            write_json_atomic(path / "scene_gt_info.json", info_doc)
        for view in bundle.views:
            vid = view.view_id
            if vid in bundle.rgb:
                save_image_atomic(path / "rgb" / view_image_name(vid),
                                  bundle.rgb[vid].astype(np.uint8))
            if vid in bundle.depth:
                save_image_atomic(path / "depth" / view_image_name(vid),
                                  bundle.depth[vid].astype(np.uint16))


# ---------------------------------------------------------------------------
# dataset-level helpers

def save_models(root, meshes: dict[int, TriangleMesh]) -> None:
    for obj_id, mesh in meshes.items():
        p = model_path(root, obj_id)
        p.parent.mkdir(parents=True, exist_ok=True)
        save_mesh_ply(p, mesh)


def load_models(root) -> dict[int, TriangleMesh]:
    models_dir = Path(root) / "models"
    meshes = {}
    for p in sorted(models_dir.glob("obj_*.ply")):
        obj_id = int(p.stem.split("_")[1])
        meshes[obj_id] = load_mesh_ply(p)
    return meshes


def load_model(root, obj_id: int) -> TriangleMesh:
    p = model_path(root, obj_id)
    if not p.exists():
        raise MeshNotFound(obj_id)
    return load_mesh_ply(p)


def write_dataset_camera(root, k: CameraIntrinsics, depth_scale: float) -> None:
    write_json_atomic(Path(root) / "camera.json", {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height, "depth_scale": depth_scale,
    })


# ---------------------------------------------------------------------------
# exports

def export_coco(bundle: SceneBundle, masks: dict[int, list[InstanceMask]]) -> dict:
    """COCO annotation document with a single class-agnostic category.

    One image entry per view, one RLE annotation per instance; the
    source obj_id is kept in a non-standard per-annotation field.
    """
    images = []
    annotations = []
    ann_id = 1
    for view in bundle.views:
        vid = view.view_id
        k = view.cam_k
        images.append({
            "id": vid,
            "width": k.width,
            "height": k.height,
            "file_name": f"rgb/{view_image_name(vid)}",
        })
        for mask in masks.get(vid, []):
            if mask.bits.shape != (k.height, k.width):
                raise DimensionMismatch(
                    f"mask shape {mask.bits.shape} != view {vid} "
                    f"({k.height}, {k.width})")
            annotations.append({
                "id": ann_id,
                "image_id": vid,
                "category_id": 1,
                "segmentation": rle_encode(mask.bits),
                "area": mask.area,
                "bbox": list(mask.bbox()),
                "iscrowd": 0,
                "obj_id": mask.instance_id if mask.instance_id is not None else -1,
            })
            ann_id += 1
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "object"}],
    }


def labeled_point_cloud(view: ViewRecord, rgb: np.ndarray, depth: np.ndarray,
                        masks: list[InstanceMask]) -> PointCloud:
    """Deproject every valid depth pixel; label points by covering mask.

    Mask i labels its points with instance_id when set (and positive),
    otherwise i + 1; unmasked points get label 0.
    """
    if not masks_disjoint(masks):
        raise ValueError("masks must be pairwise disjoint")
    label_img = np.zeros(depth.shape, dtype=np.int64)
    for i, mask in enumerate(masks):
        if mask.bits.shape != depth.shape:
            raise DimensionMismatch(
                f"mask shape {mask.bits.shape} != depth shape {depth.shape}")
        label = mask.instance_id if (mask.instance_id or 0) > 0 else i + 1
        label_img[mask.bits] = label
    cloud = deproject(depth, view.cam_k, view.depth_scale, rgb=rgb)
    labels = label_img[cloud.pixels[:, 1], cloud.pixels[:, 0]]
    return PointCloud(points=cloud.points, colors=cloud.colors,
                      labels=labels, pixels=cloud.pixels)
