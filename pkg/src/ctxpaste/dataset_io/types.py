"""Core dataset records: annotated images and per-object annotations."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import Box

logger = logging.getLogger(__name__)

# Tolerated disagreement (pixels) between a stored box and its mask's tight box
# before the box is snapped on load.
BOX_SNAP_TOLERANCE = 2.0


def tight_box(mask: np.ndarray) -> Box:
    """Smallest half-open box containing all foreground pixels of a binary mask.

    Raises:
        ValueError: if the mask has no foreground pixels.
    """
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("tight_box of an empty mask")
    return Box(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


@dataclass
class ObjectAnnotation:
    """One annotated object: class, box, optional instance mask."""

    class_id: int
    box: Box
    mask: np.ndarray | None = None  # bool (H, W), full image size
    is_synthetic: bool = False
    is_crowd: bool = False


@dataclass
class AnnotatedImage:
    """An image plus its annotations; the unit of augmentation."""

    image_id: str
    pixels: np.ndarray  # uint8 (H, W, 3)
    objects: list[ObjectAnnotation] = field(default_factory=list)
    semantic_map: np.ndarray | None = None  # uint8 (H, W), 0 = background
    source: str = ""

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def bounds(self) -> Box:
        return Box(0.0, 0.0, float(self.width), float(self.height))

    def has_instance_masks(self) -> bool:
        return bool(self.objects) and all(o.mask is not None for o in self.objects)


def normalize_annotations(image: AnnotatedImage) -> AnnotatedImage:
    """Enforce load-time invariants on one image record.

    Boxes are snapped to their mask's tight box when the two disagree by more
    than BOX_SNAP_TOLERANCE pixels on any side, and clipped to image bounds.
    """
    fixed: list[ObjectAnnotation] = []
    for i, obj in enumerate(image.objects):
        box = obj.box
        if obj.mask is not None:
            if obj.mask.shape != image.pixels.shape[:2]:
                raise ValueError(
                    f"mask shape {obj.mask.shape} != image shape "
                    f"{image.pixels.shape[:2]} (image {image.image_id}, object {i})"
                )
            if not obj.mask.any():
                logger.warning(
                    "image %s object %d: empty mask, dropping mask", image.image_id, i
                )
                obj = replace(obj, mask=None)
            else:
                tb = tight_box(obj.mask)
                dev = max(
                    abs(tb.x_min - box.x_min),
                    abs(tb.y_min - box.y_min),
                    abs(tb.x_max - box.x_max),
                    abs(tb.y_max - box.y_max),
                )
                if dev > BOX_SNAP_TOLERANCE:
                    logger.debug(
                        "image %s object %d: box deviates from mask tight box by "
                        "%.1fpx, snapping",
                        image.image_id,
                        i,
                        dev,
                    )
                    box = tb
        clipped = box.clip(image.width, image.height)
        if clipped is None:
            logger.warning(
                "image %s object %d: box %s entirely outside image, dropping",
                image.image_id,
                i,
                box.as_tuple(),
            )
            continue
        fixed.append(replace(obj, box=clipped))
    image.objects = fixed
    return image


def dataset_fingerprint(dataset: list[AnnotatedImage]) -> str:
    """Content hash of a dataset (ids, classes, boxes, mask bytes)."""
    h = hashlib.sha256()
    for image in dataset:
        h.update(image.image_id.encode("utf-8"))
        h.update(np.int64([image.height, image.width]).tobytes())
        for obj in image.objects:
            h.update(
                np.float64(
                    [obj.class_id, *obj.box.as_tuple(), obj.is_crowd, obj.is_synthetic]
                ).tobytes()
            )
            if obj.mask is not None:
                h.update(np.packbits(obj.mask).tobytes())
    return h.hexdigest()
