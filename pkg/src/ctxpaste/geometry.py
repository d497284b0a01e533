"""Axis-aligned box arithmetic shared by every stage of the pipeline.

Coordinates are continuous, in the image frame (x right, y down). Boxes are
half-open [min, max) when rasterized so that every pixel has one owner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoFitError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with strictly positive width and height."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains_box(self, other: "Box", tol: float = 1e-9) -> bool:
        return (
            self.x_min <= other.x_min + tol
            and self.y_min <= other.y_min + tol
            and other.x_max <= self.x_max + tol
            and other.y_max <= self.y_max + tol
        )

    def clip(self, image_w: float, image_h: float) -> "Box | None":
        """Intersect with the image rectangle; None if nothing remains."""
        x0, y0 = max(self.x_min, 0.0), max(self.y_min, 0.0)
        x1, y1 = min(self.x_max, image_w), min(self.y_max, image_h)
        if x0 >= x1 or y0 >= y1:
            return None
        return Box(x0, y0, x1, y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class ShapeParams:
    """Box shape as (scale, aspect): scale = sqrt(relative area), aspect = w/h."""

    scale: float
    aspect: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and 0.0 < self.scale):
            raise ValueError(f"scale must be finite and positive, got {self.scale}")
        if not (math.isfinite(self.aspect) and self.aspect > 0.0):
            raise ValueError(f"aspect must be finite and positive, got {self.aspect}")


def intersection_area(a: Box, b: Box) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]. Symmetric."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def coverage(inner: Box, outer: Box) -> float:
    """Fraction of `outer` covered by `inner`: area(inner ∩ outer) / area(outer).

    Not symmetric; the second argument is always the denominator.
    """
    return intersection_area(inner, outer) / outer.area


def shape_params(box: Box, image_w: float, image_h: float) -> ShapeParams:
    """Shape of a box relative to its image.

    scale = sqrt(area(box) / area(image)); aspect = width / height.

    Raises:
        ValueError: if the box extends beyond the image bounds.
    """
    if not Box(0.0, 0.0, float(image_w), float(image_h)).contains_box(box):
        raise ValueError(f"box {box.as_tuple()} exceeds image bounds {image_w}x{image_h}")
    scale = math.sqrt(box.area / (image_w * image_h))
    return ShapeParams(scale=min(scale, 1.0), aspect=box.width / box.height)


def box_from_shape(
    p: ShapeParams,
    center: tuple[float, float],
    image_w: float,
    image_h: float,
    tol: float = 1e-6,
) -> Box:
    """Inverse of :func:`shape_params` placed at a given center.

    width = scale * sqrt(image_area * aspect), height = scale * sqrt(image_area / aspect).

    Raises:
        NoFitError: if the resulting box does not fit inside the image at that center.
    """
    image_area = image_w * image_h
    w = p.scale * math.sqrt(image_area * p.aspect)
    h = p.scale * math.sqrt(image_area / p.aspect)
    cx, cy = center
    x0, y0 = cx - w / 2.0, cy - h / 2.0
    x1, y1 = cx + w / 2.0, cy + h / 2.0
    if x0 < -tol or y0 < -tol or x1 > image_w + tol or y1 > image_h + tol:
        raise NoFitError(
            f"shape (s={p.scale:.4f}, a={p.aspect:.4f}) does not fit at center ({cx}, {cy}) "
            f"in {image_w}x{image_h}"
        )
    # Snap float fuzz back onto the image rectangle.
    return Box(
        min(max(x0, 0.0), image_w),
        min(max(y0, 0.0), image_h),
        max(min(x1, image_w), 0.0),
        max(min(y1, image_h), 0.0),
    )
