"""Binary instance masks and the COCO run-length codec.

Masks are boolean (H, W) arrays.  The run-length encoding follows the
COCO uncompressed convention: counts alternate background/foreground runs
over the column-major (Fortran) flattening, starting with background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class InstanceMask:
    """One segmented instance: pixels plus optional confidence and id."""

    bits: np.ndarray  # (H, W) bool
    confidence: float | None = None
    instance_id: int | None = None

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits, dtype=bool))
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def bbox(self) -> tuple[int, int, int, int]:
        """Tight (x, y, w, h) box; (0, 0, 0, 0) for an empty mask."""
        return mask_bbox(self.bits)


def mask_bbox(bits: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if len(rows) == 0:
        return (0, 0, 0, 0)
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def rle_encode(bits: np.ndarray) -> dict:
    """Encode a boolean mask as COCO uncompressed RLE."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    flat = bits.reshape(-1, order="F")
    if flat.size == 0:
        return {"size": [h, w], "counts": []}
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts  # counts always start with a background run
    return {"size": [h, w], "counts": [int(c) for c in counts]}


def rle_decode(rle: dict) -> np.ndarray:
    """Decode COCO uncompressed RLE back to a boolean mask."""
    h, w = rle["size"]
    counts = rle["counts"]
    total = int(sum(counts))
    if total != h * w:
        raise ValueError(f"RLE counts sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape((h, w), order="F")


def masks_disjoint(masks) -> bool:
    """True if no pixel is claimed by more than one mask."""
    if not masks:
        return True
    acc = np.zeros_like(masks[0].bits, dtype=np.int32)
    for m in masks:
        if m.bits.shape != acc.shape:
            raise DimensionMismatch("masks have differing shapes")
        acc += m.bits
    return bool((acc <= 1).all())
