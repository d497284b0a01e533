"""Contextual images: neighborhood crops with the target box masked out.

A contextual image carries only the surroundings of a box. The box interior
is overwritten with a constant mid-gray before the crop is resized, so no
object pixel or color statistic can leak into the scorer input.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image

from .dataset_io.types import AnnotatedImage
from .errors import NoFitError
from .geometry import Box, iou
from .rng import derive_rng
from .shape_model import ShapeHistogram, sample_box

logger = logging.getLogger(__name__)

CONTEXT_SIZE = 300
FILL_COLOR = (128, 128, 128)
ENLARGE_RANGE = (1.5, 3.0)
BACKGROUND_IOU_MAX = 0.2
BACKGROUND_TRIES = 50


@dataclass
class ContextualImage:
    """A 300x300 neighborhood crop whose source box interior is masked out."""

    pixels: np.ndarray  # uint8 (CONTEXT_SIZE, CONTEXT_SIZE, 3)
    source_box: Box
    neighborhood: Box
    label: int | None = None  # 0 = background, 1..C = masked object's class
    image_id: str | None = None


def _fill_pixel_range(lo: float, hi: float) -> tuple[int, int]:
    # Pixels whose centers fall in the half-open interval [lo, hi).
    return int(math.ceil(lo - 0.5)), int(math.ceil(hi - 0.5))


def make_contextual(
    image: AnnotatedImage,
    box: Box,
    rng: np.random.Generator,
    out_size: int = CONTEXT_SIZE,
) -> ContextualImage:
    """Extract one contextual image for a box.

    The neighborhood is the box enlarged about its center by a factor drawn
    uniformly from ENLARGE_RANGE, clipped to the image while still containing
    the box. The box interior is filled before the bilinear resize.
    """
    g = float(rng.uniform(*ENLARGE_RANGE))
    cx, cy = box.center
    half_w, half_h = box.width * g / 2.0, box.height * g / 2.0
    enlarged = Box(cx - half_w, cy - half_h, cx + half_w, cy + half_h)
    clipped = enlarged.clip(image.width, image.height)
    # Rasterize the neighborhood to whole pixels (outward, re-clipped).
    x0 = max(int(math.floor(clipped.x_min)), 0)
    y0 = max(int(math.floor(clipped.y_min)), 0)
    x1 = min(int(math.ceil(clipped.x_max)), image.width)
    y1 = min(int(math.ceil(clipped.y_max)), image.height)
    neighborhood = Box(float(x0), float(y0), float(x1), float(y1))

    crop = image.pixels[y0:y1, x0:x1].copy()
    fx0, fx1 = _fill_pixel_range(box.x_min, box.x_max)
    fy0, fy1 = _fill_pixel_range(box.y_min, box.y_max)
    crop[max(fy0 - y0, 0) : fy1 - y0, max(fx0 - x0, 0) : fx1 - x0] = FILL_COLOR
    resized = np.asarray(
        Image.fromarray(crop).resize((out_size, out_size), Image.BILINEAR),
        dtype=np.uint8,
    )
    return ContextualImage(
        pixels=resized,
        source_box=box,
        neighborhood=neighborhood,
        image_id=image.image_id,
    )


def sample_background_box(
    image: AnnotatedImage,
    hist: ShapeHistogram,
    rng: np.random.Generator,
    max_tries: int = BACKGROUND_TRIES,
) -> Box | None:
    """A histogram-shaped box overlapping no ground-truth box (IoU < threshold)."""
    gt_boxes = [o.box for o in image.objects]
    for _ in range(max_tries):
        try:
            box = sample_box(hist, image.width, image.height, rng)
        except NoFitError:
            continue
        if all(iou(box, gt) < BACKGROUND_IOU_MAX for gt in gt_boxes):
            return box
    return None


def gen_training_set(
    dataset: list[AnnotatedImage],
    hist: ShapeHistogram,
    seed: int,
    bg_ratio: int = 3,
) -> Iterator[ContextualImage]:
    """Scorer training stream: one positive per ground-truth box plus
    bg_ratio background contextual images per positive, all labeled.

    Deterministic given (dataset order, seed); per-image randomness is keyed
    on the image id so the stream may be sharded by image.
    """
    for image in dataset:
        rng = derive_rng(seed, image.image_id, "context-train")
        positives = 0
        for obj in image.objects:
            if obj.is_crowd:
                continue
            ctx = make_contextual(image, obj.box, rng)
            ctx.label = obj.class_id
            positives += 1
            yield ctx
        needed = positives * bg_ratio
        emitted = 0
        for _ in range(needed):
            box = sample_background_box(image, hist, rng)
            if box is None:
                continue
            ctx = make_contextual(image, box, rng)
            ctx.label = 0
            emitted += 1
            yield ctx
        if emitted < needed:
            logger.warning(
                "image %s: only %d/%d background contextual images accepted",
                image.image_id,
                emitted,
                needed,
            )


def export_training_set(
    items: Iterable[ContextualImage], out_dir: str | Path
) -> tuple[int, Path]:
    """Write contextual images as PNGs plus a labels CSV (path,label).

    This directory layout is the input contract of the scorer trainer.
    """
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "labels.csv"
    count = 0
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "label"])
        for i, ctx in enumerate(items):
            if ctx.label is None:
                raise ValueError("cannot export an unlabeled contextual image")
            name = f"{i:06d}_{ctx.image_id}_{ctx.label}.png"
            Image.fromarray(ctx.pixels).save(image_dir / name)
            writer.writerow([f"images/{name}", ctx.label])
            count += 1
    return count, csv_path
