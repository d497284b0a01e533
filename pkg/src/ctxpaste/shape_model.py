"""Empirical 2D (scale, aspect) distribution of ground-truth boxes.

The histogram is the single source of box shapes for both background
contextual images and placement candidates. Scale bins are uniform over
(0, 1]; aspect bins are uniform in log2(aspect) over [-3, 3] with aspect
clipped to that range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io.types import AnnotatedImage
from .errors import EmptyDistribution, NoFitError
from .geometry import Box, ShapeParams, shape_params

SCALE_BINS = 16
ASPECT_BINS = 16
LOG_ASPECT_RANGE = (-3.0, 3.0)


@dataclass
class ShapeHistogram:
    scale_edges: np.ndarray  # (SCALE_BINS + 1,), over (0, 1]
    aspect_edges: np.ndarray  # (ASPECT_BINS + 1,), in log2(aspect)
    counts: np.ndarray  # (SCALE_BINS, ASPECT_BINS) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise EmptyDistribution("histogram has no counts")
        return self.counts / total

    def bin_of(self, p: ShapeParams) -> tuple[int, int]:
        si = int(np.clip(np.searchsorted(self.scale_edges, p.scale, side="left") - 1,
                         0, len(self.scale_edges) - 2))
        la = math.log2(p.aspect)
        ai = int(np.clip(np.searchsorted(self.aspect_edges, la, side="right") - 1,
                         0, len(self.aspect_edges) - 2))
        return si, ai

    def add(self, p: ShapeParams) -> None:
        si, ai = self.bin_of(p)
        self.counts[si, ai] += 1

    def to_dict(self) -> dict:
        return {
            "scale_edges": self.scale_edges.tolist(),
            "aspect_edges": self.aspect_edges.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeHistogram":
        return cls(
            scale_edges=np.asarray(d["scale_edges"], dtype=np.float64),
            aspect_edges=np.asarray(d["aspect_edges"], dtype=np.float64),
            counts=np.asarray(d["counts"], dtype=np.int64),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ShapeHistogram":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def empty_histogram() -> ShapeHistogram:
    return ShapeHistogram(
        scale_edges=np.linspace(0.0, 1.0, SCALE_BINS + 1),
        aspect_edges=np.linspace(*LOG_ASPECT_RANGE, ASPECT_BINS + 1),
        counts=np.zeros((SCALE_BINS, ASPECT_BINS), dtype=np.int64),
    )


def fit(dataset: list[AnnotatedImage]) -> ShapeHistogram:
    """Histogram the shapes of all non-crowd ground-truth boxes.

    Raises:
        EmptyDistribution: if the dataset contributes no boxes.
    """
    hist = empty_histogram()
    for image in dataset:
        for obj in image.objects:
            if obj.is_crowd:
                continue
            hist.add(shape_params(obj.box, image.width, image.height))
    if hist.total == 0:
        raise EmptyDistribution("no ground-truth boxes in dataset")
    return hist


def sample_shape(hist: ShapeHistogram, rng: np.random.Generator) -> ShapeParams:
    """Draw a (scale, aspect) pair: bin by empirical probability, uniform within the bin."""
    probs = hist.probabilities.reshape(-1)
    flat = int(rng.choice(probs.size, p=probs))
    si, ai = divmod(flat, hist.counts.shape[1])
    scale = rng.uniform(hist.scale_edges[si], hist.scale_edges[si + 1])
    log_aspect = rng.uniform(hist.aspect_edges[ai], hist.aspect_edges[ai + 1])
    return ShapeParams(scale=max(scale, 1e-9), aspect=float(2.0 ** log_aspect))


def sample_box(
    hist: ShapeHistogram,
    image_w: float,
    image_h: float,
    rng: np.random.Generator,
    max_tries: int = 50,
) -> Box:
    """Sample a box of a drawn shape at a uniform position fully inside the image.

    Raises:
        NoFitError: when no drawn shape fits after max_tries attempts.
    """
    image_area = image_w * image_h
    for _ in range(max_tries):
        p = sample_shape(hist, rng)
        w = p.scale * math.sqrt(image_area * p.aspect)
        h = p.scale * math.sqrt(image_area / p.aspect)
        if w > image_w * (1 + 1e-9) or h > image_h * (1 + 1e-9) or w <= 0 or h <= 0:
            continue
        w, h = min(w, image_w), min(h, image_h)  # absorb float fuzz at full scale
        cx = rng.uniform(w / 2.0, image_w - w / 2.0) if w < image_w else image_w / 2.0
        cy = rng.uniform(h / 2.0, image_h - h / 2.0) if h < image_h else image_h / 2.0
        return Box(
            max(cx - w / 2.0, 0.0),
            max(cy - h / 2.0, 0.0),
            min(cx + w / 2.0, image_w),
            min(cy + h / 2.0, image_h),
        )
    raise NoFitError(f"no fitting box after {max_tries} tries in {image_w}x{image_h}")
