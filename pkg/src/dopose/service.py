"""HTTP service backing the annotation UI.

Stateless overlay rendering plus file-backed mutations: the service
never holds state that is not reconstructible from the scene directory,
so a crash loses at most an unsaved draft on the client.  One mutating
job per scene is enforced; mask generation runs as a background job
pollable under /api/jobs/{id}.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import imageio.v3 as iio
import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import annotate, bop
from .errors import DoposeError, MissingWorldTransform
from .geometry import Pose
from .renderer import render_overlay


class PoseBody(BaseModel):
    obj_id: int
    rotation: list[float] = Field(min_length=9, max_length=9)
    translation: list[float] = Field(min_length=3, max_length=3)


class OverlayBody(PoseBody):
    tint: list[int] = Field(default=[255, 64, 64], min_length=3, max_length=3)
    alpha: float = 0.5


class AnnotationBody(BaseModel):
    ref_view_id: int
    poses: list[PoseBody]


def _parse_pose(body: PoseBody) -> Pose:
    try:
        return Pose.from_flat(body.rotation, body.translation)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=f"invalid pose: {e}")


class JobManager:
    """At most one mutating job per scene; finished jobs stay queryable."""

    def __init__(self):
        self._lock = threading.Lock()
        self._busy: set[int] = set()
        self._jobs: dict[str, dict] = {}
        self._counter = 0

    def acquire(self, scene_id: int, kind: str) -> str:
        with self._lock:
            if scene_id in self._busy:
                raise HTTPException(
                    status_code=409,
                    detail=f"a job is already running for scene {scene_id}")
            self._busy.add(scene_id)
            self._counter += 1
            job_id = f"job-{self._counter:06d}"
            self._jobs[job_id] = {"job_id": job_id, "scene_id": scene_id,
                                  "kind": kind, "status": "running",
                                  "detail": ""}
            return job_id

    def finish(self, job_id: str, status: str, detail: str = ""):
        with self._lock:
            job = self._jobs[job_id]
            job["status"] = status
            job["detail"] = detail
            self._busy.discard(job["scene_id"])

    def get(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                raise HTTPException(status_code=404, detail="unknown job")
            return dict(self._jobs[job_id])

    def run(self, scene_id: int, kind: str, fn, background: bool = False) -> dict:
        job_id = self.acquire(scene_id, kind)

        def execute():
            try:
                fn()
            except Exception as e:  # job errors surface via the status API
                self.finish(job_id, "error", f"{type(e).__name__}: {e}")
            else:
                self.finish(job_id, "done")

        if background:
            threading.Thread(target=execute, daemon=True).start()
        else:
            execute()
        return self.get(job_id)


def create_app(dataset_root, split: str = "train", ui_dir=None) -> FastAPI:
    """App factory; pass ui_dir to also serve the built annotation UI."""
    root = Path(dataset_root)
    split_dir = root / split
    app = FastAPI(title="dopose annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.jobs = JobManager()
    app.state.dataset_root = root
    mesh_cache: dict[int, object] = {}

    def scene_dir(scene_id: int) -> Path:
        d = split_dir / bop.scene_dir_name(scene_id)
        if not (d / "scene_camera.json").exists():
            raise HTTPException(status_code=404,
                                detail=f"unknown scene {scene_id}")
        return d

    def load_scene(scene_id: int) -> bop.SceneBundle:
        try:
            return bop.load_scene(scene_dir(scene_id))
        except DoposeError as e:
            raise HTTPException(status_code=500, detail=str(e))

    def get_mesh(obj_id: int):
        if obj_id not in mesh_cache:
            try:
                mesh_cache[obj_id] = bop.load_model(root, obj_id)
            except DoposeError:
                raise HTTPException(status_code=404,
                                    detail=f"unknown object {obj_id}")
        return mesh_cache[obj_id]

    def png_bytes(array: np.ndarray) -> Response:
        return Response(content=iio.imwrite("<bytes>", array, extension=".png"),
                        media_type="image/png")

    # -- browsing ----------------------------------------------------------

    @app.get("/api/scenes")
    def list_scenes():
        if not split_dir.exists():
            return []
        summaries = []
        for d in sorted(split_dir.iterdir()):
            if not (d / "scene_camera.json").exists():
                continue
            cam = json.loads((d / "scene_camera.json").read_text())
            n_objects = 0
            status = "new"
            if (d / annotate.REF_ANNOTATION_FILENAME).exists():
                ann = json.loads((d / annotate.REF_ANNOTATION_FILENAME).read_text())
                n_objects = len(ann.get("poses", []))
                status = "reference"
            if (d / "scene_gt.json").exists():
                gt = json.loads((d / "scene_gt.json").read_text())
                first = next(iter(gt.values()), [])
                n_objects = max(n_objects, len(first))
                status = "annotated"
            summaries.append({"scene_id": int(d.name),
                              "view_count": len(cam),
                              "object_count": n_objects,
                              "status": status})
        return summaries

    @app.get("/api/scenes/{scene_id}/views/{view_id}")
    def get_view(scene_id: int, view_id: int, layer: str = "rgb"):
        d = scene_dir(scene_id)
        rgb_path = d / "rgb" / bop.view_image_name(view_id)
        depth_path = d / "depth" / bop.view_image_name(view_id)
        if not rgb_path.exists():
            raise HTTPException(status_code=404,
                                detail=f"unknown view {view_id}")
        if layer == "rgb":
            return Response(content=rgb_path.read_bytes(),
                            media_type="image/png")
        if layer == "depth_vis":
            depth = bop.load_depth(depth_path)
            valid = depth > 0
            vis = np.zeros(depth.shape, dtype=np.uint8)
            if valid.any():
                lo, hi = int(depth[valid].min()), int(depth[valid].max())
                if hi > lo:
                    span = (hi - depth[valid].astype(np.float64)) / (hi - lo)
                    vis[valid] = (55 + 200 * span).astype(np.uint8)
                else:
                    vis[valid] = 128
            return png_bytes(vis)
        raise HTTPException(status_code=422,
                            detail=f"unknown layer {layer!r}")

    # -- stateless overlay rendering ---------------------------------------

    @app.post("/api/scenes/{scene_id}/views/{view_id}/overlay")
    def post_overlay(scene_id: int, view_id: int, body: OverlayBody):
        scene = load_scene(scene_id)
        try:
            view = scene.view(view_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown view {view_id}")
        mesh = get_mesh(body.obj_id)
        pose = _parse_pose(body)
        out = render_overlay(scene.rgb[view_id], mesh, pose, view.cam_k,
                             tint=tuple(body.tint), alpha=body.alpha)
        return png_bytes(out)

    # -- annotation persistence and jobs ------------------------------------

    @app.get("/api/scenes/{scene_id}/annotation")
    def get_annotation(scene_id: int):
        path = scene_dir(scene_id) / annotate.REF_ANNOTATION_FILENAME
        if not path.exists():
            raise HTTPException(status_code=404, detail="no annotation saved")
        return json.loads(path.read_text())

    @app.get("/api/scenes/{scene_id}/gt")
    def get_gt(scene_id: int):
        """Propagated per-view poses, so the UI can review without any
        client-side geometry."""
        path = scene_dir(scene_id) / "scene_gt.json"
        if not path.exists():
            raise HTTPException(status_code=404,
                                detail="no ground truth; propagate first")
        return json.loads(path.read_text())

    @app.put("/api/scenes/{scene_id}/annotation")
    def put_annotation(scene_id: int, body: AnnotationBody):
        d = scene_dir(scene_id)
        poses = tuple((p.obj_id, _parse_pose(p)) for p in body.poses)
        ann = annotate.ReferenceAnnotation(scene_id=scene_id,
                                           ref_view_id=body.ref_view_id,
                                           poses=poses)
        annotate.save_reference_annotation(
            d / annotate.REF_ANNOTATION_FILENAME, ann)
        return {"scene_id": scene_id, "saved_poses": len(poses)}

    @app.post("/api/scenes/{scene_id}/propagate")
    def post_propagate(scene_id: int):
        d = scene_dir(scene_id)
        ann_path = d / annotate.REF_ANNOTATION_FILENAME
        if not ann_path.exists():
            raise HTTPException(status_code=412,
                                detail="no reference annotation saved")
        if not (d / "scene_world.json").exists():
            raise HTTPException(status_code=412,
                                detail="scene_world.json is missing")
        scene = load_scene(scene_id)
        ann = annotate.load_reference_annotation(ann_path)

        def job():
            try:
                gt = annotate.propagate_poses(ann, scene.views)
            except MissingWorldTransform as e:
                raise RuntimeError(str(e))
            annotate.write_scene_gt(d, gt)

        return app.state.jobs.run(scene_id, "propagate", job, background=False)

    @app.post("/api/scenes/{scene_id}/masks")
    def post_generate_masks(scene_id: int):
        d = scene_dir(scene_id)
        scene = load_scene(scene_id)
        if not scene.gt:
            raise HTTPException(status_code=412,
                                detail="scene has no ground truth; propagate first")
        meshes = {}
        for entries in scene.gt.values():
            for e in entries:
                meshes[e.obj_id] = get_mesh(e.obj_id)

        def job():
            annotate.write_ground_truth_files(d, scene, meshes)

        return app.state.jobs.run(scene_id, "masks", job, background=True)

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        return app.state.jobs.get(job_id)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
