import json

import numpy as np
import pytest

from dopose.bop import (GtEntry, GtInfo, SceneBundle, ViewRecord, export_coco,
                        labeled_point_cloud, load_model, load_models,
                        load_scene, save_models, save_scene, scene_lock)
from dopose.errors import (DimensionMismatch, InconsistentViewIds,
                           MalformedFile, MeshNotFound, MissingImage,
                           SceneLocked)
from dopose.geometry import CameraIntrinsics, Pose
from dopose.masks import InstanceMask, rle_decode
from dopose.meshio import (load_labeled_cloud_ply, load_mesh_ply,
                           save_labeled_cloud_ply, save_mesh_ply)
from dopose.synthetic import box_mesh

from conftest import random_pose


def make_view(view_id=0, width=16, height=12, world=None):
    k = CameraIntrinsics(fx=30.0, fy=31.0, cx=width / 2, cy=height / 2,
                         width=width, height=height)
    return ViewRecord(view_id=view_id, cam_k=k, depth_scale=0.5,
                      world_to_cam=world)


def make_bundle(n_views=1, rng=None, with_gt=True):
    rng = rng or np.random.default_rng(7)
    views, rgb, depth, gt = [], {}, {}, {}
    for vid in range(n_views):
        views.append(make_view(vid, world=random_pose(rng)))
        rgb[vid] = rng.integers(0, 255, size=(12, 16, 3)).astype(np.uint8)
        depth[vid] = rng.integers(0, 4000, size=(12, 16)).astype(np.uint16)
        if with_gt:
            gt[vid] = [GtEntry(obj_id=1, cam_from_model=random_pose(rng))]
    return SceneBundle(scene_id=3, views=views, gt=gt, rgb=rgb, depth=depth)


class TestSceneRoundTrip:
    def test_minimal_fixture(self, tmp_path):
        bundle = make_bundle(1)
        save_scene(bundle, tmp_path / "000003")
        loaded = load_scene(tmp_path / "000003")
        assert loaded.scene_id == 3
        assert len(loaded.views) == 1
        assert len(loaded.gt[0]) == 1

    def test_sixteen_views(self, tmp_path):
        bundle = make_bundle(16)
        save_scene(bundle, tmp_path / "000003")
        loaded = load_scene(tmp_path / "000003")
        assert loaded.view_ids() == list(range(16))

    def test_numeric_identity(self, tmp_path, rng):
        bundle = make_bundle(3, rng)
        save_scene(bundle, tmp_path / "s")
        loaded = load_scene(tmp_path / "s")
        for orig, back in zip(bundle.views, loaded.views):
            assert back.cam_k == orig.cam_k
            assert back.depth_scale == orig.depth_scale
            np.testing.assert_array_equal(back.world_to_cam.rotation,
                                          orig.world_to_cam.rotation)
            np.testing.assert_array_equal(back.world_to_cam.translation,
                                          orig.world_to_cam.translation)
        for vid in bundle.gt:
            for a, b in zip(bundle.gt[vid], loaded.gt[vid]):
                assert a.obj_id == b.obj_id
                np.testing.assert_array_equal(a.cam_from_model.rotation,
                                              b.cam_from_model.rotation)
                np.testing.assert_array_equal(a.cam_from_model.translation,
                                              b.cam_from_model.translation)
            np.testing.assert_array_equal(bundle.rgb[vid], loaded.rgb[vid])
            np.testing.assert_array_equal(bundle.depth[vid], loaded.depth[vid])

    def test_cam_k_written_with_full_precision(self, tmp_path):
        view = ViewRecord(view_id=0,
                          cam_k=CameraIntrinsics(fx=1234.567890123456,
                                                 fy=987.6543210987654,
                                                 cx=8.000000000001, cy=6.0,
                                                 width=16, height=12),
                          depth_scale=0.123456789012345)
        bundle = SceneBundle(scene_id=0, views=[view],
                             rgb={0: np.zeros((12, 16, 3), np.uint8)},
                             depth={0: np.zeros((12, 16), np.uint16)})
        save_scene(bundle, tmp_path / "s")
        text = (tmp_path / "s" / "scene_camera.json").read_text()
        assert "1234.567890123456" in text
        loaded = load_scene(tmp_path / "s")
        assert loaded.views[0].cam_k == view.cam_k
        assert loaded.views[0].depth_scale == view.depth_scale

    def test_duplicate_view_id_rejected_before_write(self, tmp_path):
        bundle = make_bundle(1)
        bundle.views.append(bundle.views[0])
        target = tmp_path / "dup"
        with pytest.raises(InconsistentViewIds):
            save_scene(bundle, target)
        assert not (target / "scene_camera.json").exists()

    def test_missing_world_transforms_flagged(self, tmp_path):
        bundle = make_bundle(2)
        save_scene(bundle, tmp_path / "s")
        (tmp_path / "s" / "scene_world.json").unlink()
        loaded = load_scene(tmp_path / "s")
        assert not loaded.has_world_transforms
        assert all(v.world_to_cam is None for v in loaded.views)

    def test_missing_gt_yields_empty(self, tmp_path):
        bundle = make_bundle(1, with_gt=False)
        save_scene(bundle, tmp_path / "s")
        loaded = load_scene(tmp_path / "s")
        assert loaded.gt == {}

    def test_gt_info_round_trip(self, tmp_path):
        bundle = make_bundle(1)
        info = GtInfo(bbox_amodal=(1, 2, 3, 4), bbox_visible=(1, 2, 3, 2),
                      px_count_amodal=12, px_count_visible=6,
                      px_count_valid_depth=10, visib_fract=0.5)
        bundle.gt_info = {0: [info]}
        save_scene(bundle, tmp_path / "s")
        loaded = load_scene(tmp_path / "s")
        assert loaded.gt_info[0][0] == info


class TestSceneErrors:
    def test_missing_depth_scale_names_view(self, tmp_path):
        bundle = make_bundle(2)
        save_scene(bundle, tmp_path / "s")
        cam = json.loads((tmp_path / "s" / "scene_camera.json").read_text())
        del cam["1"]["depth_scale"]
        (tmp_path / "s" / "scene_camera.json").write_text(json.dumps(cam))
        with pytest.raises(MalformedFile) as exc:
            load_scene(tmp_path / "s")
        assert exc.value.key == "1"

    def test_missing_image(self, tmp_path):
        bundle = make_bundle(1)
        save_scene(bundle, tmp_path / "s")
        (tmp_path / "s" / "rgb" / "000000.png").unlink()
        with pytest.raises(MissingImage):
            load_scene(tmp_path / "s")

    def test_gt_with_unknown_view(self, tmp_path):
        bundle = make_bundle(1)
        save_scene(bundle, tmp_path / "s")
        gt = json.loads((tmp_path / "s" / "scene_gt.json").read_text())
        gt["9"] = gt["0"]
        (tmp_path / "s" / "scene_gt.json").write_text(json.dumps(gt))
        with pytest.raises(InconsistentViewIds):
            load_scene(tmp_path / "s")

    def test_missing_scene_camera(self, tmp_path):
        with pytest.raises(MalformedFile):
            load_scene(tmp_path)

    def test_lock_excludes_second_writer(self, tmp_path):
        with scene_lock(tmp_path / "s"):
            with pytest.raises(SceneLocked):
                with scene_lock(tmp_path / "s"):
                    pass
        # released afterwards
        with scene_lock(tmp_path / "s"):
            pass


class TestGtInfoInvariants:
    def test_visible_cannot_exceed_amodal(self):
        with pytest.raises(ValueError):
            GtInfo(bbox_amodal=(0, 0, 1, 1), bbox_visible=(0, 0, 1, 1),
                   px_count_amodal=1, px_count_visible=2,
                   px_count_valid_depth=0, visib_fract=1.0)

    def test_fraction_consistency(self):
        with pytest.raises(ValueError):
            GtInfo(bbox_amodal=(0, 0, 2, 2), bbox_visible=(0, 0, 2, 2),
                   px_count_amodal=4, px_count_visible=2,
                   px_count_valid_depth=4, visib_fract=0.9)

    def test_empty_amodal_fraction_zero(self):
        info = GtInfo(bbox_amodal=(0, 0, 0, 0), bbox_visible=(0, 0, 0, 0),
                      px_count_amodal=0, px_count_visible=0,
                      px_count_valid_depth=0, visib_fract=0.0)
        assert info.visib_fract == 0.0


class TestCocoExport:
    def test_full_frame_mask(self):
        view = make_view(0, width=4, height=4)
        bundle = SceneBundle(scene_id=0, views=[view],
                             rgb={0: np.zeros((4, 4, 3), np.uint8)},
                             depth={0: np.zeros((4, 4), np.uint16)})
        doc = export_coco(bundle, {0: [InstanceMask(np.ones((4, 4), bool))]})
        assert len(doc["images"]) == 1
        ann = doc["annotations"][0]
        assert ann["area"] == 16
        assert ann["bbox"] == [0, 0, 4, 4]
        assert doc["categories"] == [{"id": 1, "name": "object"}]

    def test_two_disjoint_masks(self):
        view = make_view(0, width=4, height=4)
        bundle = SceneBundle(scene_id=0, views=[view],
                             rgb={0: np.zeros((4, 4, 3), np.uint8)},
                             depth={0: np.zeros((4, 4), np.uint16)})
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[:2, :2] = True
        b[2:, 2:] = True
        doc = export_coco(bundle, {0: [InstanceMask(a, instance_id=5),
                                       InstanceMask(b, instance_id=9)]})
        assert [x["area"] for x in doc["annotations"]] == [4, 4]
        assert [x["obj_id"] for x in doc["annotations"]] == [5, 9]

    def test_rle_decodes_back_to_source(self, rng):
        view = make_view(0)
        bundle = SceneBundle(scene_id=0, views=[view],
                             rgb={0: np.zeros((12, 16, 3), np.uint8)},
                             depth={0: np.zeros((12, 16), np.uint16)})
        masks = [InstanceMask(rng.random((12, 16)) > 0.6) for _ in range(20)]
        doc = export_coco(bundle, {0: masks})
        for ann, mask in zip(doc["annotations"], masks):
            np.testing.assert_array_equal(rle_decode(ann["segmentation"]),
                                          mask.bits)
        areas = sum(a["area"] for a in doc["annotations"])
        assert areas == sum(m.area for m in masks)

    def test_dimension_mismatch(self):
        bundle = SceneBundle(scene_id=0, views=[make_view(0)],
                             rgb={0: np.zeros((12, 16, 3), np.uint8)},
                             depth={0: np.zeros((12, 16), np.uint16)})
        with pytest.raises(DimensionMismatch):
            export_coco(bundle, {0: [InstanceMask(np.ones((5, 5), bool))]})


class TestLabeledCloud:
    def test_all_invalid_depth_empty_cloud(self, tmp_path):
        view = make_view(0)
        cloud = labeled_point_cloud(view, np.zeros((12, 16, 3), np.uint8),
                                    np.zeros((12, 16), np.uint16), [])
        assert len(cloud) == 0
        save_labeled_cloud_ply(tmp_path / "c.ply", cloud)
        assert load_labeled_cloud_ply(tmp_path / "c.ply").points.shape == (0, 3)

    def test_single_mask_labels_and_positions(self):
        view = make_view(0, width=16, height=12)
        k = view.cam_k
        depth = np.zeros((12, 16), np.uint16)
        depth[5:7, 6:8] = 1000  # four pixels at raw 1000, scale 0.5 -> 500 mm
        mask = np.zeros((12, 16), bool)
        mask[5:7, 6:8] = True
        cloud = labeled_point_cloud(view, np.zeros((12, 16, 3), np.uint8),
                                    depth, [InstanceMask(mask)])
        assert len(cloud) == 4
        assert (cloud.labels == 1).all()
        z = 1000 * 0.5
        for (u, v), p in zip(cloud.pixels, cloud.points):
            expected = [(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z]
            np.testing.assert_allclose(p, expected)

    def test_background_count_identity(self, rng):
        view = make_view(0)
        depth = rng.integers(1, 3000, size=(12, 16)).astype(np.uint16)
        mask_a = np.zeros((12, 16), bool)
        mask_b = np.zeros((12, 16), bool)
        mask_a[:4, :5] = True
        mask_b[8:, 10:] = True
        masks = [InstanceMask(mask_a), InstanceMask(mask_b)]
        cloud = labeled_point_cloud(view, np.zeros((12, 16, 3), np.uint8),
                                    depth, masks)
        n_valid = int((depth > 0).sum())
        assert len(cloud) == n_valid
        n_background = int((cloud.labels == 0).sum())
        assert n_background == n_valid - sum(m.area for m in masks)

    def test_overlapping_masks_rejected(self):
        view = make_view(0)
        full = InstanceMask(np.ones((12, 16), bool))
        with pytest.raises(ValueError):
            labeled_point_cloud(view, np.zeros((12, 16, 3), np.uint8),
                                np.ones((12, 16), np.uint16), [full, full])


class TestPly:
    def test_mesh_round_trip_binary(self, tmp_path):
        mesh = box_mesh((80.0, 60.0, 40.0), center=(5.0, -3.0, 100.0))
        save_mesh_ply(tmp_path / "m.ply", mesh, binary=True)
        loaded = load_mesh_ply(tmp_path / "m.ply")
        np.testing.assert_allclose(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.triangles, mesh.triangles)

    def test_mesh_round_trip_ascii(self, tmp_path):
        mesh = box_mesh((80.0, 60.0, 40.0))
        save_mesh_ply(tmp_path / "m.ply", mesh, binary=False)
        loaded = load_mesh_ply(tmp_path / "m.ply")
        np.testing.assert_allclose(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.triangles, mesh.triangles)

    def test_labeled_cloud_round_trip(self, tmp_path, rng):
        from dopose.geometry import PointCloud
        pts = rng.uniform(-100, 100, size=(50, 3)).astype(np.float32)
        cloud = PointCloud(points=pts.astype(np.float64),
                           colors=rng.integers(0, 255, (50, 3)).astype(np.uint8),
                           labels=rng.integers(0, 5, 50))
        for binary in (True, False):
            save_labeled_cloud_ply(tmp_path / "c.ply", cloud, binary=binary)
            loaded = load_labeled_cloud_ply(tmp_path / "c.ply")
            np.testing.assert_allclose(loaded.points, cloud.points, atol=1e-2)
            np.testing.assert_array_equal(loaded.colors, cloud.colors)
            np.testing.assert_array_equal(loaded.labels, cloud.labels)

    def test_models_round_trip(self, tmp_path):
        meshes = {1: box_mesh((10, 10, 10)), 2: box_mesh((5, 5, 5))}
        save_models(tmp_path, meshes)
        assert (tmp_path / "models" / "obj_000001.ply").exists()
        loaded = load_models(tmp_path)
        assert set(loaded) == {1, 2}
        with pytest.raises(MeshNotFound):
            load_model(tmp_path, 99)
