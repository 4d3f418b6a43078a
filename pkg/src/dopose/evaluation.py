"""Category-agnostic segmentation metrics.

Two protocols:

* COCO-style AP/AR for a single "object" category, IoU thresholds
  0.50:0.05:0.95, 101-point interpolated precision, AR at a detection
  cap (default 100).
* Overlap P/R/F: per image, predictions are assigned to ground-truth
  masks by a Hungarian matching that maximizes the summed pairwise
  F-measure; precision/recall then pool matched-intersection pixels
  against all predicted / all ground-truth pixels.  Scores are averaged
  per image and reported on a 0-100 scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, DoposeError
from .masks import InstanceMask, masks_disjoint, rle_decode

DEFAULT_IOU_THRESHOLDS = tuple(np.round(np.arange(0.5, 1.0, 0.05), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


class OverlappingMasks(DoposeError):
    """Masks within one side of an image overlap; the metric is undefined."""


@dataclass(frozen=True)
class Prediction:
    """One predicted instance for an image."""

    image_id: int
    mask: InstanceMask

    def __post_init__(self):
        if self.mask.confidence is None:
            raise ValueError("predictions need a confidence score")

    @property
    def confidence(self) -> float:
        return self.mask.confidence

    def bbox(self) -> tuple[int, int, int, int]:
        return self.mask.bbox()


@dataclass(frozen=True)
class EvalReport:
    """All metrics on a 0-100 scale.

    overlap_p/r/f are per-image means (the benchmark convention), so the
    F = 2PR/(P+R) identity holds within each image but not necessarily
    between the averaged dataset-level fields.
    """

    ap: float
    ar: float
    ap_per_threshold: dict[float, float]
    ar_per_threshold: dict[float, float]
    overlap_p: float = 0.0
    overlap_r: float = 0.0
    overlap_f: float = 0.0

    def __post_init__(self):
        for v in (self.ap, self.ar, self.overlap_p, self.overlap_r, self.overlap_f):
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"metric {v} outside [0, 100]")


def mask_iou(a: InstanceMask, b: InstanceMask) -> float:
    """Intersection over union of two masks; 0.0 when both are empty."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(
            f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    return inter / union if union > 0 else 0.0


def bbox_iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def _canonical_key(pred: Prediction):
    """Deterministic content-based tiebreak for equal confidences."""
    return (-pred.confidence, -pred.mask.area, pred.bbox(),
            tuple(np.flatnonzero(pred.mask.bits.reshape(-1))[:16].tolist()))


def _greedy_match(ious: np.ndarray, threshold: float) -> np.ndarray:
    """COCO greedy matching: detections in order pick the best free gt.

    Equal-IoU ties go to the later ground-truth index, matching the
    standard protocol implementation.
    """
    n_det, n_gt = ious.shape
    matched_gt = np.full(n_det, -1, dtype=np.int64)
    gt_taken = np.zeros(n_gt, dtype=bool)
    floor = min(threshold, 1.0 - 1e-10)
    for d in range(n_det):
        best, best_g = floor, -1
        for g in range(n_gt):
            if gt_taken[g] or ious[d, g] < best:
                continue
            best, best_g = ious[d, g], g
        if best_g >= 0:
            gt_taken[best_g] = True
            matched_gt[d] = best_g
    return matched_gt


def coco_ap_ar(preds: list[Prediction],
               gts: dict[int, list[InstanceMask]],
               mode: str = "mask",
               iou_thresholds=None,
               max_dets: int = 100,
               confidence_floor: float = 0.0) -> EvalReport:
    """Single-category COCO AP/AR over masks or bounding boxes.

    With no ground truth anywhere, both metrics are defined as 0.
    """
    if mode not in ("mask", "bbox"):
        raise ValueError(f"unknown mode {mode!r}")
    thresholds = [float(t) for t in
                  (iou_thresholds if iou_thresholds is not None
                   else DEFAULT_IOU_THRESHOLDS)]
    preds = [p for p in preds if p.confidence >= confidence_floor]

    image_ids = sorted(set(gts) | {p.image_id for p in preds})
    n_thr = len(thresholds)
    all_scores: list[float] = []
    all_keys: list = []
    all_tp: list[np.ndarray] = []  # (n_thr,) bool per detection
    n_gt_total = 0

    for img in image_ids:
        img_gts = gts.get(img, [])
        n_gt_total += len(img_gts)
        dets = sorted((p for p in preds if p.image_id == img),
                      key=_canonical_key)[:max_dets]
        if not dets:
            continue
        if mode == "mask":
            ious = np.array([[mask_iou(d.mask, g) for g in img_gts]
                             for d in dets], dtype=np.float64).reshape(len(dets), -1)
        else:
            gt_boxes = [g.bbox() for g in img_gts]
            ious = np.array([[bbox_iou(d.bbox(), b) for b in gt_boxes]
                             for d in dets], dtype=np.float64).reshape(len(dets), -1)
        tp = np.zeros((len(dets), n_thr), dtype=bool)
        for ti, thr in enumerate(thresholds):
            tp[:, ti] = _greedy_match(ious, thr) >= 0
        for i, d in enumerate(dets):
            all_scores.append(d.confidence)
            all_keys.append(_canonical_key(d))
            all_tp.append(tp[i])

    ap_per_thr: dict[float, float] = {}
    ar_per_thr: dict[float, float] = {}
    if n_gt_total == 0 or not all_scores:
        for thr in thresholds:
            ap_per_thr[thr] = 0.0
            ar_per_thr[thr] = 0.0
    else:
        order = sorted(range(len(all_scores)), key=lambda i: all_keys[i])
        tp_matrix = np.stack([all_tp[i] for i in order])  # (D, T)
        for ti, thr in enumerate(thresholds):
            tp_cum = np.cumsum(tp_matrix[:, ti])
            fp_cum = np.cumsum(~tp_matrix[:, ti])
            recall = tp_cum / n_gt_total
            precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
            # precision envelope: non-increasing from the right
            for i in range(len(precision) - 1, 0, -1):
                if precision[i] > precision[i - 1]:
                    precision[i - 1] = precision[i]
            idx = np.searchsorted(recall, RECALL_POINTS, side="left")
            sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
            ap_per_thr[thr] = float(np.mean(sampled)) * 100.0
            ar_per_thr[thr] = float(recall[-1]) * 100.0

    ap = math.fsum(ap_per_thr.values()) / n_thr
    ar = math.fsum(ar_per_thr.values()) / n_thr
    return EvalReport(ap=ap, ar=ar, ap_per_threshold=ap_per_thr,
                      ar_per_threshold=ar_per_thr)


def _pairwise_f(preds: list[InstanceMask], gts: list[InstanceMask]
                ) -> tuple[np.ndarray, np.ndarray]:
    """F-measure and intersection matrices from pairwise pixel overlap."""
    f = np.zeros((len(preds), len(gts)), dtype=np.float64)
    inter = np.zeros_like(f)
    for i, c in enumerate(preds):
        for j, g in enumerate(gts):
            if c.bits.shape != g.bits.shape:
                raise DimensionMismatch("prediction/gt mask shapes differ")
            n = int((c.bits & g.bits).sum())
            inter[i, j] = n
            if n:
                p = n / c.area
                r = n / g.area
                f[i, j] = 2 * p * r / (p + r)
    return f, inter


def overlap_image_prf(preds: list[InstanceMask],
                      gts: list[InstanceMask]) -> tuple[float, float, float]:
    """Overlap P/R/F for one image, as fractions in [0, 1]."""
    for side, name in ((preds, "predictions"), (gts, "ground truth")):
        if not masks_disjoint(side):
            raise OverlappingMasks(f"{name} masks overlap within the image")
    if not preds and not gts:
        return 1.0, 1.0, 1.0
    if not preds or not gts:
        return 0.0, 0.0, 0.0
    f_matrix, inter = _pairwise_f(preds, gts)
    rows, cols = linear_sum_assignment(-f_matrix)
    matched = math.fsum(inter[i, j] for i, j in zip(rows, cols))
    total_pred = sum(c.area for c in preds)
    total_gt = sum(g.area for g in gts)
    p = matched / total_pred if total_pred > 0 else 0.0
    r = matched / total_gt if total_gt > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def overlap_prf(preds: dict[int, list[InstanceMask]],
                gts: dict[int, list[InstanceMask]]) -> tuple[float, float, float]:
    """Dataset Overlap P/R/F: mean of per-image scores, times 100."""
    image_ids = sorted(set(preds) | set(gts))
    if not image_ids:
        return 100.0, 100.0, 100.0
    ps, rs, fs = [], [], []
    for img in image_ids:
        p, r, f = overlap_image_prf(preds.get(img, []), gts.get(img, []))
        ps.append(p)
        rs.append(r)
        fs.append(f)
    n = len(image_ids)
    return (math.fsum(ps) / n * 100.0,
            math.fsum(rs) / n * 100.0,
            math.fsum(fs) / n * 100.0)


# ---------------------------------------------------------------------------
# COCO document parsing

def parse_coco_gt(doc: dict) -> dict[int, list[InstanceMask]]:
    """Ground-truth masks per image id from a COCO annotation document."""
    gts: dict[int, list[InstanceMask]] = {int(img["id"]): [] for img in doc["images"]}
    for ann in doc["annotations"]:
        bits = rle_decode(ann["segmentation"])
        gts[int(ann["image_id"])].append(InstanceMask(bits))
    return gts


def parse_coco_results(doc, default_score: float = 1.0) -> list[Prediction]:
    """Predictions from a COCO results array (or a full annotation doc)."""
    entries = doc["annotations"] if isinstance(doc, dict) else doc
    preds = []
    for ann in entries:
        bits = rle_decode(ann["segmentation"])
        score = float(ann.get("score", default_score))
        preds.append(Prediction(image_id=int(ann["image_id"]),
                                mask=InstanceMask(bits, confidence=score)))
    return preds


def evaluate_documents(gt_doc: dict, results_doc,
                       iou_thresholds=None, max_dets: int = 100,
                       confidence_floor: float = 0.0
                       ) -> tuple[EvalReport, EvalReport]:
    """Full evaluation of a results document against a gt document.

    Returns (segmentation report incl. overlap P/R/F, bounding-box report).
    """
    gts = parse_coco_gt(gt_doc)
    preds = [p for p in parse_coco_results(results_doc)
             if p.confidence >= confidence_floor]
    seg = coco_ap_ar(preds, gts, mode="mask", iou_thresholds=iou_thresholds,
                     max_dets=max_dets)
    box = coco_ap_ar(preds, gts, mode="bbox", iou_thresholds=iou_thresholds,
                     max_dets=max_dets)
    preds_by_image: dict[int, list[InstanceMask]] = {}
    for p in preds:
        preds_by_image.setdefault(p.image_id, []).append(p.mask)
    op, orr, of = overlap_prf(preds_by_image, gts)
    seg = replace(seg, overlap_p=op, overlap_r=orr, overlap_f=of)
    return seg, box


def report_to_dict(seg: EvalReport, box: EvalReport) -> dict:
    return {
        "segmentation": {
            "ap": seg.ap, "ar": seg.ar,
            "ap_per_threshold": {f"{t:.2f}": v for t, v in seg.ap_per_threshold.items()},
            "ar_per_threshold": {f"{t:.2f}": v for t, v in seg.ar_per_threshold.items()},
        },
        "bbox": {
            "ap": box.ap, "ar": box.ar,
            "ap_per_threshold": {f"{t:.2f}": v for t, v in box.ap_per_threshold.items()},
            "ar_per_threshold": {f"{t:.2f}": v for t, v in box.ar_per_threshold.items()},
        },
        "overlap": {"p": seg.overlap_p, "r": seg.overlap_r, "f": seg.overlap_f},
    }


def format_report_table(seg: EvalReport, box: EvalReport) -> str:
    lines = [
        "            segmentation      bounding box",
        "            AP      AR        AP      AR",
        (f"            {seg.ap:<7.1f} {seg.ar:<9.1f} "
         f"{box.ap:<7.1f} {box.ar:<.1f}"),
        "",
        (f"overlap     P {seg.overlap_p:.1f}   R {seg.overlap_r:.1f}   "
         f"F {seg.overlap_f:.1f}"),
    ]
    return "\n".join(lines)
