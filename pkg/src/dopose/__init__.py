"""Toolkit for category-agnostic grasping pipelines.

Covers multi-view 6D pose annotation and BOP-format dataset tooling,
deterministic mask rendering, class-agnostic segmentation metrics, and
suction grasp computation from instance masks and depth.
"""

from .geometry import (CameraIntrinsics, PointCloud, Pose, compose, deproject,
                       estimate_normals, invert, project, transform_points)
from .masks import InstanceMask, rle_decode, rle_encode
from .renderer import (DepthBuffer, TriangleMesh, composite_visible_masks,
                       rasterize, render_overlay)
from .bop import (GtEntry, GtInfo, SceneBundle, ViewRecord, export_coco,
                  labeled_point_cloud, load_scene, save_scene)
from .annotate import (ReferenceAnnotation, generate_ground_truth,
                       propagate_poses)
from .evaluation import (EvalReport, Prediction, coco_ap_ar, mask_iou,
                         overlap_prf)
from .grasping import (GraspPose, PlaneModel, RansacConfig,
                       compute_suction_grasp, halfway_orientation,
                       plane_center, rank_masks_by_confidence,
                       segment_biggest_plane)

__version__ = "0.1.0"
