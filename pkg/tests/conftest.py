"""Shared synthetic-dataset builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ctxpaste.dataset_io.types import AnnotatedImage, ObjectAnnotation, tight_box

# Distinct paint colors per class id (index 0 unused).
CLASS_COLORS = [
    None,
    (220, 60, 60),
    (60, 200, 80),
    (70, 90, 230),
    (230, 210, 60),
    (200, 70, 200),
]


def textured_background(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    base = rng.integers(90, 180, size=3)
    noise = rng.integers(-25, 26, size=(height, width, 3))
    return np.clip(base[None, None, :] + noise, 0, 255).astype(np.uint8)


def paint_object(
    pixels: np.ndarray,
    class_id: int,
    x0: int,
    y0: int,
    w: int,
    h: int,
    rng: np.random.Generator,
    shape: str = "ellipse",
) -> np.ndarray:
    """Draw one object; returns its full-image mask."""
    height, width = pixels.shape[:2]
    mask = np.zeros((height, width), dtype=bool)
    ys, xs = np.mgrid[0:h, 0:w]
    if shape == "ellipse":
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        ry, rx = h / 2.0, w / 2.0
        local = ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
    else:
        local = np.ones((h, w), dtype=bool)
    mask[y0 : y0 + h, x0 : x0 + w] = local
    color = np.array(CLASS_COLORS[class_id])
    jitter = rng.integers(-15, 16, size=(int(mask.sum()), 3))
    pixels[mask] = np.clip(color[None, :] + jitter, 0, 255).astype(np.uint8)
    return mask


def make_synthetic_dataset(
    n_images: int,
    width: int = 128,
    height: int = 96,
    num_classes: int = 3,
    seed: int = 0,
    max_objects: int = 2,
    with_semantic: bool = True,
    empty_every: int = 0,
) -> list[AnnotatedImage]:
    """Deterministic toy dataset: textured scenes with non-overlapping
    class-colored ellipses carrying exact masks."""
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n_images):
        pixels = textured_background(height, width, rng)
        objects: list[ObjectAnnotation] = []
        taken = np.zeros((height, width), dtype=bool)
        n_objects = int(rng.integers(1, max_objects + 1))
        if empty_every and i % empty_every == 0:
            n_objects = 0
        for _ in range(n_objects):
            class_id = int(rng.integers(1, num_classes + 1))
            w = int(rng.integers(width // 5, width // 3))
            h = int(rng.integers(height // 5, height // 3))
            placed = False
            for _ in range(20):
                x0 = int(rng.integers(0, width - w))
                y0 = int(rng.integers(0, height - h))
                if not taken[y0 : y0 + h, x0 : x0 + w].any():
                    placed = True
                    break
            if not placed:
                continue
            mask = paint_object(pixels, class_id, x0, y0, w, h, rng)
            taken |= mask
            objects.append(
                ObjectAnnotation(class_id=class_id, box=tight_box(mask), mask=mask)
            )
        semantic = None
        if with_semantic:
            semantic = np.zeros((height, width), dtype=np.uint8)
            for obj in objects:
                semantic[obj.mask] = obj.class_id
        images.append(
            AnnotatedImage(
                image_id=f"img{i:04d}",
                pixels=pixels,
                objects=objects,
                semantic_map=semantic,
            )
        )
    return images


@pytest.fixture
def small_dataset() -> list[AnnotatedImage]:
    return make_synthetic_dataset(12, seed=7)
