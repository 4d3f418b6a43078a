"""Command-line entry point for the whole pipeline.

Subcommands: propagate, render-masks, export, evaluate, grasp, serve.
Option values resolve as: command-line flag > DOPOSE_* environment
variable > config file (--config / DOPOSE_CONFIG, JSON) > built-in
default.  Machine-readable output goes to stdout or --out files; logs
and warnings go to stderr.  Exit codes: 0 ok, 2 bad input or unmet
precondition, 1 processing error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import annotate, bop, evaluation, grasping
from .errors import DoposeError
from .geometry import CameraIntrinsics
from .masks import InstanceMask, rle_decode

ENV_PREFIX = "DOPOSE_"


class CliError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


def _log(*parts):
    print(*parts, file=sys.stderr)


class Options:
    """Flag/env/config/default resolution for one parsed invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = {}
        config_path = self._raw("config")
        if config_path:
            try:
                self.config = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise CliError(f"cannot read config file {config_path}: {e}")

    def _raw(self, name):
        cli = getattr(self.args, name.replace("-", "_"), None)
        if cli is not None:
            return cli
        env = os.environ.get(ENV_PREFIX + name.replace("-", "_").upper())
        if env is not None:
            return env
        return self.config.get(name)

    def get(self, name, default=None, cast=str, required=False):
        raw = self._raw(name)
        if raw is None:
            if required and default is None:
                raise CliError(f"missing required option --{name}")
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as e:
            raise CliError(f"bad value for --{name}: {e}")

    def ransac_config(self) -> grasping.RansacConfig:
        return grasping.RansacConfig(
            iterations=self.get("ransac-iters", 500, int),
            inlier_threshold=self.get("ransac-threshold-mm", 3.0, float),
            min_inliers=self.get("min-inliers", 50, int),
            seed=self.get("seed", 0, int),
        )


def _parse_thresholds(raw) -> tuple[float, ...]:
    if isinstance(raw, (list, tuple)):
        return tuple(float(x) for x in raw)
    return tuple(float(x) for x in str(raw).replace(",", " ").split())


def _scene_dir(opts: Options) -> Path:
    scene = opts.get("scene", required=True)
    path = Path(scene)
    if not path.is_dir():
        raise CliError(f"scene directory not found: {path}")
    return path


def _dataset_root(opts: Options, scene_dir: Path) -> Path:
    root = opts.get("dataset")
    if root:
        return Path(root)
    # <root>/<split>/<scene> layout
    return scene_dir.parent.parent


# ---------------------------------------------------------------------------
# subcommands

def cmd_propagate(opts: Options) -> int:
    scene_dir = _scene_dir(opts)
    if not (scene_dir / "scene_world.json").exists():
        raise CliError(f"{scene_dir / 'scene_world.json'} is missing; "
                       "propagation needs per-view world transforms")
    ann_path = opts.get("annotation",
                        default=str(scene_dir / annotate.REF_ANNOTATION_FILENAME))
    if not Path(ann_path).exists():
        raise CliError(f"reference annotation not found: {ann_path}")
    scene = bop.load_scene(scene_dir)
    ann = annotate.load_reference_annotation(ann_path)
    gt = annotate.propagate_poses(ann, scene.views)
    annotate.write_scene_gt(scene_dir, gt)
    print(f"propagated {len(ann.poses)} objects x {len(scene.views)} views "
          f"-> {scene_dir / 'scene_gt.json'}")
    return 0


def cmd_render_masks(opts: Options) -> int:
    scene_dir = _scene_dir(opts)
    scene = bop.load_scene(scene_dir)
    if not scene.gt:
        raise CliError(f"{scene_dir} has no scene_gt.json; run propagate first")
    meshes = bop.load_models(_dataset_root(opts, scene_dir))
    if not meshes:
        raise CliError(f"no meshes under {_dataset_root(opts, scene_dir) / 'models'}")
    infos = annotate.write_ground_truth_files(scene_dir, scene, meshes)
    n = sum(len(v) for v in infos.values())
    print(f"rendered {n} masks across {len(infos)} views -> "
          f"{scene_dir / 'mask_visib'}")
    return 0


def _visible_masks_from_files(scene_dir: Path, scene: bop.SceneBundle
                              ) -> dict[int, list[InstanceMask]]:
    masks: dict[int, list[InstanceMask]] = {}
    for vid, entries in sorted(scene.gt.items()):
        per_view = []
        for idx, entry in enumerate(entries):
            p = scene_dir / "mask_visib" / bop.mask_image_name(vid, idx)
            if not p.exists():
                raise CliError(f"mask file missing: {p}; run render-masks first")
            per_view.append(InstanceMask(bop.load_mask_image(p),
                                         instance_id=entry.obj_id))
        masks[vid] = per_view
    return masks


def cmd_export(opts: Options) -> int:
    scene_dir = _scene_dir(opts)
    fmt = opts.get("format", required=True)
    scene = bop.load_scene(scene_dir)
    if not scene.gt:
        raise CliError(f"{scene_dir} has no scene_gt.json; run propagate "
                       "and render-masks first")
    if fmt == "coco":
        masks = _visible_masks_from_files(scene_dir, scene)
        doc = bop.export_coco(scene, masks)
        out = Path(opts.get("out", str(scene_dir / "scene_coco.json")))
        bop.write_json_atomic(out, doc)
        print(f"wrote {len(doc['annotations'])} annotations for "
              f"{len(doc['images'])} images -> {out}")
    elif fmt == "cloud":
        from .meshio import save_labeled_cloud_ply
        masks = _visible_masks_from_files(scene_dir, scene)
        out_dir = Path(opts.get("out", str(scene_dir / "cloud")))
        out_dir.mkdir(parents=True, exist_ok=True)
        total = 0
        for view in scene.views:
            vid = view.view_id
            cloud = bop.labeled_point_cloud(view, scene.rgb[vid],
                                            scene.depth[vid],
                                            masks.get(vid, []))
            save_labeled_cloud_ply(out_dir / f"{vid:06d}.ply", cloud)
            total += len(cloud)
        print(f"wrote {total} points across {len(scene.views)} views -> {out_dir}")
    else:
        raise CliError(f"unknown export format {fmt!r} (expected coco|cloud)")
    return 0


def cmd_evaluate(opts: Options) -> int:
    gt_path = opts.get("gt", required=True)
    results_path = opts.get("results", required=True)
    for p in (gt_path, results_path):
        if not Path(p).exists():
            raise CliError(f"document not found: {p}")
    try:
        gt_doc = json.loads(Path(gt_path).read_text())
        results_doc = json.loads(Path(results_path).read_text())
    except json.JSONDecodeError as e:
        raise CliError(f"cannot parse document: {e}")
    thresholds = opts.get("iou-thresholds", None, _parse_thresholds)
    try:
        seg, box = evaluation.evaluate_documents(
            gt_doc, results_doc, iou_thresholds=thresholds,
            max_dets=opts.get("max-dets", 100, int),
            confidence_floor=opts.get("confidence-floor", 0.0, float))
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"bad document schema in {gt_path} / {results_path}: {e}")
    print(evaluation.format_report_table(seg, box))
    out = opts.get("out")
    if out:
        bop.write_json_atomic(Path(out), evaluation.report_to_dict(seg, box))
        _log(f"report written to {out}")
    return 0


def _load_masks_document(path) -> list[InstanceMask]:
    doc = json.loads(Path(path).read_text())
    entries = doc.get("masks", doc) if isinstance(doc, dict) else doc
    masks = []
    for e in entries:
        masks.append(InstanceMask(rle_decode(e["segmentation"]),
                                  confidence=e.get("score"),
                                  instance_id=e.get("instance_id")))
    return masks


def cmd_grasp(opts: Options) -> int:
    depth_path = opts.get("depth", required=True)
    masks_path = opts.get("masks", required=True)
    intr_path = opts.get("intrinsics", required=True)
    try:
        depth = bop.load_depth(depth_path)
        intr_doc = json.loads(Path(intr_path).read_text())
        k = CameraIntrinsics(fx=intr_doc["fx"], fy=intr_doc["fy"],
                             cx=intr_doc["cx"], cy=intr_doc["cy"],
                             width=int(intr_doc["width"]),
                             height=int(intr_doc["height"]))
        masks = _load_masks_document(masks_path)
    except (OSError, KeyError, ValueError) as e:
        raise CliError(f"cannot read inputs: {e}")
    rgb_path = opts.get("rgb")
    rgb = bop.load_rgb(rgb_path) if rgb_path else None
    depth_scale = opts.get("depth-scale",
                           float(intr_doc.get("depth_scale", 1.0)), float)
    floor = opts.get("confidence-floor", 0.0, float)
    cfg = opts.ransac_config()

    ranked = grasping.rank_masks_by_confidence(
        [m for m in masks if (m.confidence is None or m.confidence >= floor)])
    grasps = []
    for i, mask in enumerate(ranked):
        try:
            g = grasping.compute_suction_grasp(rgb, depth, k, depth_scale,
                                               mask, cfg)
        except DoposeError as e:
            _log(f"warning: mask {i}: {e}")
            continue
        grasps.append({"mask_rank": i, **g.to_dict()})
    doc = json.dumps({"grasps": grasps}, indent=1)
    out = opts.get("out")
    if out:
        bop.write_bytes_atomic(Path(out), doc.encode())
        _log(f"{len(grasps)} grasps written to {out}")
    else:
        print(doc)
    return 0


def cmd_serve(opts: Options) -> int:
    import uvicorn

    from .service import create_app
    root = opts.get("dataset", required=True)
    ui_dir = opts.get("ui")
    if ui_dir and not Path(ui_dir).is_dir():
        raise CliError(f"UI directory not found: {ui_dir}")
    app = create_app(root, split=opts.get("split", "train"), ui_dir=ui_dir)
    uvicorn.run(app, host=opts.get("host", "127.0.0.1"),
                port=opts.get("port", 8000, int))
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dopose",
        description="6D pose annotation, mask rendering, segmentation "
                    "metrics and suction grasping")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--dataset", help="dataset root directory")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--seed", type=int, help="random seed (default 0)")

    p = sub.add_parser("propagate", help="write scene_gt for all views from "
                                         "a reference annotation")
    common(p)
    p.add_argument("--scene", help="scene directory")
    p.add_argument("--annotation", help="reference annotation JSON")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("render-masks", help="render mask/, mask_visib/ and "
                                            "scene_gt_info.json")
    common(p)
    p.add_argument("--scene", help="scene directory")
    p.set_defaults(func=cmd_render_masks)

    p = sub.add_parser("export", help="export COCO annotations or labeled clouds")
    common(p)
    p.add_argument("--scene", help="scene directory")
    p.add_argument("--format", help="coco or cloud")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("evaluate", help="AP/AR and Overlap P/R/F of results "
                                        "against ground truth")
    common(p)
    p.add_argument("--gt", help="COCO ground-truth document")
    p.add_argument("--results", help="COCO results document")
    p.add_argument("--iou-thresholds", help="space or comma separated list")
    p.add_argument("--max-dets", type=int, help="detection cap (default 100)")
    p.add_argument("--confidence-floor", type=float,
                   help="drop predictions below this score")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grasp", help="suction grasps from masks and depth")
    common(p)
    p.add_argument("--rgb", help="rgb image (optional)")
    p.add_argument("--depth", help="16-bit depth image")
    p.add_argument("--masks", help="masks JSON (RLE + scores)")
    p.add_argument("--intrinsics", help="intrinsics JSON")
    p.add_argument("--depth-scale", type=float, help="mm per raw depth unit")
    p.add_argument("--confidence-floor", type=float)
    p.add_argument("--ransac-iters", type=int)
    p.add_argument("--ransac-threshold-mm", type=float)
    p.add_argument("--min-inliers", type=int)
    p.set_defaults(func=cmd_grasp)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    common(p)
    p.add_argument("--split", help="dataset split to serve (default train)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui", help="directory with the built annotation UI")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = Options(args)
        return args.func(opts)
    except CliError as e:
        _log(f"error: {e}")
        return e.code
    except DoposeError as e:
        _log(f"error: {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
