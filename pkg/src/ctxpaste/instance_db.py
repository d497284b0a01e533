"""Database of segmented object cut-outs and the scale/coverage matching rule."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from .dataset_io.types import AnnotatedImage, ObjectAnnotation, dataset_fingerprint, tight_box
from .errors import IoError, MissingMasks
from .geometry import Box, ShapeParams, shape_params

logger = logging.getLogger(__name__)

SCALE_FACTOR_RANGE = (0.5, 1.5)
MIN_AREA_FRACTION = 0.8
DEFAULT_MIN_PIXELS = 100


@dataclass
class InstanceCutout:
    """A segmented object cropped to its tight box."""

    class_id: int
    pixels: np.ndarray  # uint8 (h, w, 3)
    mask: np.ndarray  # bool (h, w); tight: touches all four raster edges
    source_image_id: str
    original_shape: ShapeParams

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


@dataclass
class InstanceDatabase:
    cutouts: list[InstanceCutout] = field(default_factory=list)
    by_class: dict[int, list[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cutouts)

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.by_class)

    def add(self, cutout: InstanceCutout) -> None:
        self.by_class.setdefault(cutout.class_id, []).append(len(self.cutouts))
        self.cutouts.append(cutout)


def extract_cutout(image: AnnotatedImage, obj: ObjectAnnotation) -> InstanceCutout:
    """Crop an object's pixels and mask to the mask's tight box."""
    tb = tight_box(obj.mask)
    y0, y1 = int(tb.y_min), int(tb.y_max)
    x0, x1 = int(tb.x_min), int(tb.x_max)
    return InstanceCutout(
        class_id=obj.class_id,
        pixels=image.pixels[y0:y1, x0:x1].copy(),
        mask=obj.mask[y0:y1, x0:x1].copy(),
        source_image_id=image.image_id,
        original_shape=shape_params(tb, image.width, image.height),
    )


def build(
    dataset: list[AnnotatedImage],
    min_pixels: int = DEFAULT_MIN_PIXELS,
    object_filter: Callable[[AnnotatedImage, ObjectAnnotation], bool] | None = None,
) -> InstanceDatabase:
    """Cut every usable non-crowd object out of the dataset.

    Objects smaller than min_pixels mask pixels are skipped. An optional
    object_filter predicate can veto objects (used for weak-mask quality
    gating).

    Raises:
        MissingMasks: if no object in the dataset carries an instance mask.
    """
    db = InstanceDatabase()
    any_mask = False
    for image in dataset:
        for obj in image.objects:
            if obj.mask is None or obj.is_crowd or obj.is_synthetic:
                continue
            any_mask = True
            if int(obj.mask.sum()) < min_pixels:
                continue
            if object_filter is not None and not object_filter(image, obj):
                continue
            db.add(extract_cutout(image, obj))
    if not any_mask:
        raise MissingMasks("dataset has no instance masks; cannot build cutout database")
    logger.info("instance database: %d cutouts, %d classes", len(db), len(db.by_class))
    return db


def admissible_factor_range(
    cutout_w: float, cutout_h: float, candidate: Box
) -> tuple[float, float] | None:
    """Interval of scale factors f making the cutout fit the candidate box.

    Constraints: f within SCALE_FACTOR_RANGE, f*w <= candidate width,
    f*h <= candidate height, and the scaled box covers at least
    MIN_AREA_FRACTION of the candidate's area. None when the interval is empty.
    """
    f_hi = min(
        SCALE_FACTOR_RANGE[1], candidate.width / cutout_w, candidate.height / cutout_h
    )
    f_lo = max(
        SCALE_FACTOR_RANGE[0],
        math.sqrt(MIN_AREA_FRACTION * candidate.area / (cutout_w * cutout_h)),
    )
    if f_lo > f_hi:
        return None
    return f_lo, f_hi


def match(
    candidate: Box,
    class_id: int,
    db: InstanceDatabase,
    rng: np.random.Generator,
) -> tuple[InstanceCutout, float] | None:
    """Pick a cutout of the class that fits the candidate box, with its scale factor.

    The cutout is chosen uniformly among admissible bucket members and the
    factor uniformly within its admissible interval. None when nothing fits.
    """
    bucket = db.by_class.get(class_id, [])
    admissible: list[tuple[int, float, float]] = []
    for idx in bucket:
        c = db.cutouts[idx]
        interval = admissible_factor_range(c.width, c.height, candidate)
        if interval is not None:
            admissible.append((idx, *interval))
    if not admissible:
        return None
    idx, f_lo, f_hi = admissible[int(rng.integers(len(admissible)))]
    return db.cutouts[idx], float(rng.uniform(f_lo, f_hi))


def save_cache(db: InstanceDatabase, cache_dir: str | Path, key: str) -> None:
    """Persist the database as PNG pairs plus an index keyed by dataset fingerprint."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    try:
        for i, c in enumerate(db.cutouts):
            Image.fromarray(c.pixels).save(cache_dir / f"{i:06d}_rgb.png")
            Image.fromarray(c.mask.astype(np.uint8) * 255).save(cache_dir / f"{i:06d}_mask.png")
            entries.append(
                {
                    "class_id": c.class_id,
                    "source_image_id": c.source_image_id,
                    "shape": [c.original_shape.scale, c.original_shape.aspect],
                }
            )
        with open(cache_dir / "index.json", "w", encoding="utf-8") as f:
            json.dump({"key": key, "entries": entries}, f, sort_keys=True)
    except OSError as e:
        raise IoError(f"cannot write cutout cache to {cache_dir}: {e}") from e


def load_cache(cache_dir: str | Path, key: str) -> InstanceDatabase | None:
    """Load a cached database; None when missing or keyed to different data."""
    cache_dir = Path(cache_dir)
    index_path = cache_dir / "index.json"
    if not index_path.exists():
        return None
    with open(index_path, "r", encoding="utf-8") as f:
        index = json.load(f)
    if index.get("key") != key:
        logger.info("cutout cache key mismatch, rebuilding")
        return None
    db = InstanceDatabase()
    for i, entry in enumerate(index["entries"]):
        pixels = np.asarray(Image.open(cache_dir / f"{i:06d}_rgb.png"), dtype=np.uint8)
        mask = np.asarray(Image.open(cache_dir / f"{i:06d}_mask.png")) > 127
        db.add(
            InstanceCutout(
                class_id=entry["class_id"],
                pixels=pixels,
                mask=mask,
                source_image_id=entry["source_image_id"],
                original_shape=ShapeParams(*entry["shape"]),
            )
        )
    return db


def cache_key(dataset: list[AnnotatedImage], min_pixels: int) -> str:
    return f"{dataset_fingerprint(dataset)}:{min_pixels}"
