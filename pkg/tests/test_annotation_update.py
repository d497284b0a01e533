"""Occlusion bookkeeping tests: deletion rules against a brute-force oracle."""

import numpy as np
import pytest

from ctxpaste.annotation_update import (
    instances_to_semantic,
    update_boxes,
    update_instances,
    update_semantic,
)
from ctxpaste.dataset_io.types import ObjectAnnotation, tight_box
from ctxpaste.errors import IntegrityError
from ctxpaste.geometry import Box, iou


def rect_mask(h, w, y0, y1, x0, x1):
    mask = np.zeros((h, w), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def obj_from_mask(mask, class_id=1):
    return ObjectAnnotation(class_id=class_id, box=tight_box(mask), mask=mask)


def test_update_boxes_identical_box_deleted():
    existing = rect_mask(64, 64, 10, 30, 10, 30)
    pasted = rect_mask(64, 64, 10, 30, 10, 30)
    out = update_boxes([obj_from_mask(existing)], pasted, pasted_class=2)
    assert len(out) == 1
    assert out[0].is_synthetic and out[0].class_id == 2


def test_update_boxes_half_overlap_kept():
    existing = obj_from_mask(rect_mask(64, 64, 0, 20, 0, 20))
    pasted = rect_mask(64, 64, 0, 20, 10, 30)
    out = update_boxes([existing], pasted, pasted_class=2)
    assert len(out) == 2
    assert out[0] is existing


def test_update_boxes_per_object_rule():
    # Three objects with paste IoUs ~{0.85, 0.81, 0.2}: first two deleted.
    h = w = 100
    pasted = rect_mask(h, w, 0, 50, 0, 40)  # 50x40 at origin
    pasted_box = tight_box(pasted)

    def box_with_iou(target):
        # Shrink a copy of the pasted box from one side until IoU hits target.
        for dx in np.linspace(0, 30, 3001):
            b = Box(dx, 0, 40 + dx, 50)
            if iou(b, pasted_box) <= target:
                return ObjectAnnotation(class_id=1, box=b)
        raise AssertionError

    objs = [box_with_iou(0.85), box_with_iou(0.81), box_with_iou(0.2)]
    ious = [iou(o.box, pasted_box) for o in objs]
    out = update_boxes(objs, pasted, pasted_class=3)
    survivors = [o for o in out if not o.is_synthetic]
    # Brute force: exactly the objects at IoU <= 0.8 survive.
    assert len(survivors) == sum(1 for v in ious if v <= 0.8)
    for o in survivors:
        assert iou(o.box, pasted_box) <= 0.8


def test_update_instances_discards_85_percent_occluded():
    existing = rect_mask(64, 64, 0, 10, 0, 10)  # 100 px
    pasted = rect_mask(64, 64, 0, 10, 0, 8)
    pasted[0:5, 8:9] = True  # 85 of the 100 pixels
    assert np.logical_and(existing, pasted).sum() == 85
    out = update_instances([obj_from_mask(existing)], pasted, pasted_class=2)
    assert len(out) == 1 and out[0].is_synthetic


def test_update_instances_keeps_half_occluded_retightened():
    existing = rect_mask(64, 64, 0, 10, 0, 10)
    pasted = rect_mask(64, 64, 0, 10, 0, 5)  # covers 50 of 100 px
    out = update_instances([obj_from_mask(existing)], pasted, pasted_class=2)
    survivor = next(o for o in out if not o.is_synthetic)
    assert int(survivor.mask.sum()) == 50
    assert survivor.box.as_tuple() == (5, 0, 10, 10)


def test_update_instances_masks_pairwise_disjoint():
    rng = np.random.default_rng(77)
    for _ in range(50):
        objects = []
        taken = np.zeros((64, 64), dtype=bool)
        for class_id in range(1, int(rng.integers(2, 5))):
            y0, x0 = rng.integers(0, 40, size=2)
            h, w = rng.integers(5, 20, size=2)
            mask = rect_mask(64, 64, y0, y0 + h, x0, x0 + w) & ~taken
            if not mask.any():
                continue
            taken |= mask
            objects.append(obj_from_mask(mask, class_id))
        pasted = rect_mask(64, 64, *sorted(rng.integers(0, 64, size=2)), *sorted(rng.integers(0, 64, size=2)))
        if not pasted.any():
            continue
        out = update_instances(objects, pasted, pasted_class=1)
        union = np.zeros((64, 64), dtype=int)
        for o in out:
            union += o.mask
        assert union.max() <= 1


def test_instances_to_semantic():
    assert instances_to_semantic([], 8, 8).sum() == 0
    mask = rect_mask(8, 8, 0, 2, 0, 2)
    semantic = instances_to_semantic([obj_from_mask(mask, class_id=3)], 8, 8)
    assert (semantic == 3).sum() == 4
    assert semantic.sum() == 12


def test_instances_to_semantic_rejects_overlap():
    a = obj_from_mask(rect_mask(8, 8, 0, 4, 0, 4), 1)
    b = obj_from_mask(rect_mask(8, 8, 2, 6, 2, 6), 2)
    with pytest.raises(IntegrityError):
        instances_to_semantic([a, b], 8, 8)


def test_semantic_pixel_counts_match_masks():
    a = obj_from_mask(rect_mask(16, 16, 0, 4, 0, 4), 1)
    b = obj_from_mask(rect_mask(16, 16, 8, 12, 8, 12), 2)
    semantic = instances_to_semantic([a, b], 16, 16)
    assert (semantic > 0).sum() == a.mask.sum() + b.mask.sum()


def test_update_semantic_incremental():
    base = np.zeros((16, 16), dtype=np.uint8)
    base[0:4, 0:4] = 1
    discarded = rect_mask(16, 16, 0, 4, 0, 4)
    pasted = rect_mask(16, 16, 2, 8, 2, 8)
    out = update_semantic(base, pasted, pasted_class=2, discarded_masks=[discarded])
    assert (out[pasted] == 2).all()
    assert out[0, 0] == 0  # discarded instance pixels fall back to background
    assert base[0, 0] == 1  # input untouched


def brute_force_scene(objects, pasted_mask, pasted_class):
    """Recompute all deletion decisions from scratch for the oracle test."""
    survivors = []
    for obj in objects:
        area = obj.mask.sum()
        occ = np.logical_and(obj.mask, pasted_mask).sum()
        if area > 0 and occ / area <= 0.8:
            visible = obj.mask & ~pasted_mask
            if visible.any():
                survivors.append((obj.class_id, visible))
    return survivors


def random_scene(rng, size=64, max_objects=6):
    objects = []
    taken = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, max_objects + 1))):
        w, h = rng.integers(4, size // 2, size=2)
        x0 = int(rng.integers(0, size - w))
        y0 = int(rng.integers(0, size - h))
        mask = rect_mask(size, size, y0, y0 + h, x0, x0 + w) & ~taken
        if not mask.any():
            continue
        taken |= mask
        objects.append(obj_from_mask(mask, int(rng.integers(1, 4))))
    return objects


def test_occlusion_rules_match_brute_force_oracle():
    rng = np.random.default_rng(500)
    for _ in range(500):
        objects = random_scene(rng)
        w, h = rng.integers(6, 48, size=2)
        x0 = int(rng.integers(0, 64 - w))
        y0 = int(rng.integers(0, 64 - h))
        pasted = rect_mask(64, 64, y0, y0 + h, x0, x0 + w)

        out = update_instances(objects, pasted, pasted_class=1)
        expected = brute_force_scene(objects, pasted, 1)

        survivors = [o for o in out if not o.is_synthetic]
        assert len(survivors) == len(expected)
        for o, (class_id, visible) in zip(survivors, expected):
            assert o.class_id == class_id
            assert np.array_equal(o.mask, visible)
            assert o.box.as_tuple() == tight_box(visible).as_tuple()

        # Box-rule agreement: recompute deletions from scratch on boxes.
        box_out = update_boxes(objects, pasted, pasted_class=1)
        pasted_box = tight_box(pasted)
        expected_boxes = [o for o in objects if iou(o.box, pasted_box) <= 0.8]
        assert [o.box.as_tuple() for o in box_out[:-1]] == [
            o.box.as_tuple() for o in expected_boxes
        ]
