"""Approximate instance masks from semantic maps plus bounding boxes.

Used when a dataset has no pixel-wise instance annotations: pixels of a
semantic map are handed to boxes of the matching class, contested pixels
going to whichever box comes first in a per-image random ordering.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset_io.types import ObjectAnnotation, tight_box
from .geometry import Box, coverage

MIN_BOX_COVERAGE = 0.4


def _box_pixel_slice(box: Box, height: int, width: int) -> tuple[slice, slice]:
    # Pixels whose centers fall inside the half-open box.
    x0 = max(int(math.ceil(box.x_min - 0.5)), 0)
    x1 = min(int(math.ceil(box.x_max - 0.5)), width)
    y0 = max(int(math.ceil(box.y_min - 0.5)), 0)
    y1 = min(int(math.ceil(box.y_max - 0.5)), height)
    return slice(y0, y1), slice(x0, x1)


def approximate(
    semantic_map: np.ndarray,
    objects: list[ObjectAnnotation],
    rng: np.random.Generator,
) -> list[np.ndarray | None]:
    """Assign semantic pixels to boxes; returns one mask per object (None if empty).

    Each pixel labeled c goes to the first box in the random ordering that
    contains it and has class c. Labeled pixels outside every matching box
    stay unassigned. One global permutation is drawn per call.
    """
    height, width = semantic_map.shape
    masks: list[np.ndarray | None] = [None] * len(objects)
    taken = np.zeros((height, width), dtype=bool)
    for idx in rng.permutation(len(objects)):
        obj = objects[int(idx)]
        mask = np.zeros((height, width), dtype=bool)
        ys, xs = _box_pixel_slice(obj.box, height, width)
        region = (semantic_map[ys, xs] == obj.class_id) & ~taken[ys, xs]
        mask[ys, xs] = region
        taken[ys, xs] |= region
        masks[int(idx)] = mask if mask.any() else None
    return masks


def quality_filter(mask: np.ndarray | None, gt_box: Box) -> bool:
    """Keep an approximated instance iff its mask's tight box covers at least
    MIN_BOX_COVERAGE of the ground-truth box (inclusive). Empty masks drop."""
    if mask is None or not mask.any():
        return False
    return coverage(tight_box(mask), gt_box) >= MIN_BOX_COVERAGE


def attach_approximate_masks(
    semantic_map: np.ndarray,
    objects: list[ObjectAnnotation],
    rng: np.random.Generator,
) -> list[ObjectAnnotation]:
    """Convenience wrapper: approximate masks and attach them to the objects."""
    masks = approximate(semantic_map, objects, rng)
    for obj, mask in zip(objects, masks):
        obj.mask = mask
    return objects
