"""COCO-style JSON dataset reader."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import IntegrityError, ParseError, UnsupportedMask
from ..geometry import Box
from .rle import RleMask, decode_rle, rle_from_string
from .types import AnnotatedImage, ObjectAnnotation, normalize_annotations, tight_box

logger = logging.getLogger(__name__)


def rasterize_polygons(polygons: list[list[float]], height: int, width: int) -> np.ndarray:
    """Fill polygons into a bool raster (even-odd rule at pixel centers)."""
    mask = np.zeros((height, width), dtype=bool)
    cx = np.arange(width) + 0.5
    cy = np.arange(height) + 0.5
    for poly in polygons:
        xs = np.asarray(poly[0::2], dtype=np.float64)
        ys = np.asarray(poly[1::2], dtype=np.float64)
        if xs.size < 3:
            continue
        inside = np.zeros((height, width), dtype=bool)
        n = xs.size
        for i in range(n):
            x1, y1 = xs[i], ys[i]
            x2, y2 = xs[(i + 1) % n], ys[(i + 1) % n]
            if y1 == y2:
                continue
            # Rows whose center is crossed by this edge (half-open in y).
            crosses = (cy >= min(y1, y2)) & (cy < max(y1, y2))
            if not crosses.any():
                continue
            x_at = x1 + (cy[crosses] - y1) * (x2 - x1) / (y2 - y1)
            inside[crosses, :] ^= cx[None, :] < x_at[:, None]
        mask |= inside
    return mask


def _decode_segmentation(seg, height: int, width: int, ann_id) -> np.ndarray:
    if isinstance(seg, list):
        if not all(isinstance(p, list) for p in seg):
            raise UnsupportedMask(f"annotation {ann_id}: malformed polygon segmentation")
        return rasterize_polygons(seg, height, width)
    if isinstance(seg, dict) and "counts" in seg and "size" in seg:
        h, w = seg["size"]
        if (h, w) != (height, width):
            raise IntegrityError(
                f"annotation {ann_id}: RLE size {seg['size']} != image size "
                f"[{height}, {width}]"
            )
        counts = seg["counts"]
        if isinstance(counts, str):
            rle = rle_from_string(counts, h, w)
        elif isinstance(counts, list):
            rle = RleMask(counts=list(counts), height=h, width=w)
        else:
            raise UnsupportedMask(f"annotation {ann_id}: RLE counts of type {type(counts)}")
        return decode_rle(rle)
    raise UnsupportedMask(f"annotation {ann_id}: unrecognized segmentation payload")


def load_coco(
    json_path: str | Path, image_root: str | Path
) -> tuple[list[AnnotatedImage], dict[int, int], list[str]]:
    """Load a COCO-style dataset.

    Category ids are remapped to contiguous 1..C following the order of the
    categories array; crowd regions are kept but flagged.

    Returns:
        (images, category_mapping original_id -> new_id, class names indexed 1..C)

    Raises:
        ParseError: malformed JSON.
        IntegrityError: annotations referencing unknown images/categories.
        UnsupportedMask: segmentation payload the codec cannot decode.
    """
    json_path = Path(json_path)
    image_root = Path(image_root)
    try:
        with open(json_path, "rb") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{json_path}: {e.msg}", offset=e.pos) from e
    except OSError as e:
        raise ParseError(f"{json_path}: {e}") from e

    for key in ("images", "annotations", "categories"):
        if key not in data:
            raise ParseError(f"{json_path}: missing top-level '{key}' array")

    category_mapping: dict[int, int] = {}
    class_names: list[str] = []
    for new_id, cat in enumerate(data["categories"], start=1):
        category_mapping[cat["id"]] = new_id
        class_names.append(cat.get("name", str(cat["id"])))

    records: dict = {}
    order: list = []
    for entry in data["images"]:
        pixels = load_rgb(image_root / entry["file_name"])
        image = AnnotatedImage(
            image_id=str(entry["id"]),
            pixels=pixels,
            objects=[],
            source=str(image_root / entry["file_name"]),
        )
        records[entry["id"]] = image
        order.append(entry["id"])

    missing = sorted(
        {a["image_id"] for a in data["annotations"] if a["image_id"] not in records}
    )
    if missing:
        raise IntegrityError(f"annotations reference missing images: {missing}")

    for ann in data["annotations"]:
        image = records[ann["image_id"]]
        cat_id = ann["category_id"]
        if cat_id not in category_mapping:
            raise IntegrityError(
                f"annotation {ann.get('id')}: unknown category id {cat_id}"
            )
        mask = None
        seg = ann.get("segmentation")
        if seg:
            mask = _decode_segmentation(seg, image.height, image.width, ann.get("id"))
            if not mask.any():
                mask = None
        x, y, w, h = ann["bbox"]
        if w <= 0 or h <= 0:
            if mask is None:
                logger.warning(
                    "annotation %s: degenerate bbox and no mask, skipping", ann.get("id")
                )
                continue
            box = tight_box(mask)
        else:
            box = Box(float(x), float(y), float(x + w), float(y + h))
        image.objects.append(
            ObjectAnnotation(
                class_id=category_mapping[cat_id],
                box=box,
                mask=mask,
                is_crowd=bool(ann.get("iscrowd", 0)),
            )
        )

    images = [normalize_annotations(records[i]) for i in order]
    return images, category_mapping, class_names


def load_rgb(path: str | Path) -> np.ndarray:
    """Read any PIL-supported image as an RGB8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
