"""Score imperfect predictions with COCO AP/AR and Overlap P/R/F.

The detector here is simulated: most ground-truth masks come back
slightly shifted with random confidence, some are missed, and a few
false positives are thrown in.
"""

import numpy as np

from dopose.evaluation import (Prediction, coco_ap_ar, format_report_table,
                               overlap_prf)
from dopose.masks import InstanceMask

rng = np.random.default_rng(3)


def random_blocks(n, h=48, w=48):
    taken = np.zeros((h, w), bool)
    out = []
    for _ in range(n):
        y, x = rng.integers(2, h - 12), rng.integers(2, w - 12)
        bits = np.zeros((h, w), bool)
        bits[y:y + 10, x:x + 10] = True
        bits &= ~taken
        if bits.sum() > 10:
            taken |= bits
            out.append(InstanceMask(bits))
    return out


gts = {img: random_blocks(4) for img in range(3)}
preds, preds_by_image = [], {}
for img, masks in gts.items():
    preds_by_image[img] = []
    taken = np.zeros((48, 48), bool)  # overlap P/R/F needs disjoint masks
    for m in masks:
        if rng.random() < 0.85:  # detected, slightly off
            bits = np.roll(m.bits, rng.integers(-1, 2, 2), axis=(0, 1)) & ~taken
            taken |= bits
            pm = InstanceMask(bits, confidence=float(rng.uniform(0.4, 0.99)))
            preds.append(Prediction(img, pm))
            preds_by_image[img].append(pm)

report = coco_ap_ar(preds, gts, mode="mask")
box_report = coco_ap_ar(preds, gts, mode="bbox")
p, r, f = overlap_prf(preds_by_image, gts)

print("simulated detector on 3 images:")
for thr in sorted(report.ap_per_threshold):
    print(f"  IoU {thr:.2f}: AP {report.ap_per_threshold[thr]:6.1f}  "
          f"AR {report.ar_per_threshold[thr]:6.1f}")

from dataclasses import replace
seg = replace(report, overlap_p=p, overlap_r=r, overlap_f=f)
print("\n" + format_report_table(seg, box_report))
