"""Annotation rewriting after a paste: box deletion, mask occlusion, semantic maps."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .dataset_io.types import ObjectAnnotation, tight_box
from .errors import IntegrityError
from .geometry import iou

BOX_DELETE_IOU = 0.8
OCCLUSION_DISCARD = 0.8


def update_boxes(
    objects: list[ObjectAnnotation],
    pasted_mask: np.ndarray,
    pasted_class: int,
) -> list[ObjectAnnotation]:
    """Box-level update: append the pasted object, delete heavily covered ones.

    The new object's box is the tight box of the pasted mask. Any pre-existing
    object whose box overlaps it with IoU strictly above BOX_DELETE_IOU is
    deleted.
    """
    new_obj = ObjectAnnotation(
        class_id=pasted_class,
        box=tight_box(pasted_mask),
        mask=pasted_mask,
        is_synthetic=True,
    )
    survivors = [o for o in objects if iou(o.box, new_obj.box) <= BOX_DELETE_IOU]
    return survivors + [new_obj]


def occlusion_discards(
    objects: list[ObjectAnnotation], pasted_mask: np.ndarray
) -> list[int]:
    """Indices of objects whose masks the paste occludes beyond the discard ratio."""
    dropped = []
    for i, obj in enumerate(objects):
        if obj.mask is None:
            raise ValueError("occlusion bookkeeping requires masks on all objects")
        area = int(obj.mask.sum())
        occluded = int(np.logical_and(obj.mask, pasted_mask).sum())
        if area == 0 or occluded / area > OCCLUSION_DISCARD:
            dropped.append(i)
    return dropped


def update_instances(
    objects: list[ObjectAnnotation],
    pasted_mask: np.ndarray,
    pasted_class: int,
) -> list[ObjectAnnotation]:
    """Instance-level update with visible-part semantics.

    Pasted pixels are removed from every existing mask. An existing object
    loses its annotation entirely when the paste occludes more than
    OCCLUSION_DISCARD of its original mask area. Surviving boxes are
    re-tightened to their visible masks.
    """
    dropped = set(occlusion_discards(objects, pasted_mask))
    out: list[ObjectAnnotation] = []
    for i, obj in enumerate(objects):
        if i in dropped:
            continue
        visible = np.logical_and(obj.mask, np.logical_not(pasted_mask))
        if not visible.any():
            continue
        out.append(replace(obj, mask=visible, box=tight_box(visible)))
    out.append(
        ObjectAnnotation(
            class_id=pasted_class,
            box=tight_box(pasted_mask),
            mask=pasted_mask.copy(),
            is_synthetic=True,
        )
    )
    return out


def instances_to_semantic(
    objects: list[ObjectAnnotation], height: int, width: int
) -> np.ndarray:
    """Semantic map from instance masks: each pixel takes its owner's class.

    Raises:
        IntegrityError: if any two masks overlap (an update bug upstream).
    """
    semantic = np.zeros((height, width), dtype=np.uint8)
    claimed = np.zeros((height, width), dtype=bool)
    for obj in objects:
        if obj.mask is None:
            raise ValueError("instances_to_semantic requires masks on all objects")
        if np.logical_and(claimed, obj.mask).any():
            raise IntegrityError("instance masks overlap; annotation update is broken")
        claimed |= obj.mask
        semantic[obj.mask] = obj.class_id
    return semantic


def update_semantic(
    semantic: np.ndarray,
    pasted_mask: np.ndarray,
    pasted_class: int,
    discarded_masks: list[np.ndarray],
) -> np.ndarray:
    """Incremental semantic-map update for one paste.

    Pasted pixels take the pasted class; pixels of instances discarded by the
    occlusion rule fall back to background where not covered by the paste.
    """
    out = semantic.copy()
    for mask in discarded_masks:
        out[np.logical_and(mask, np.logical_not(pasted_mask))] = 0
    out[pasted_mask] = pasted_class
    return out
