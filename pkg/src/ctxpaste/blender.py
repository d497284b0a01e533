"""Compositing of cut-outs into scenes: edge blending modes, the in-place
enlarge ablation, and the random-placement baseline selector."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .dataset_io.types import AnnotatedImage, ObjectAnnotation, tight_box
from .errors import NoFitError
from .geometry import Box
from .instance_db import InstanceCutout, InstanceDatabase, extract_cutout
from .placement import PlacementCandidate
from .shape_model import ShapeHistogram, sample_box

logger = logging.getLogger(__name__)

BLEND_MODES = ("none", "gaussian_edge", "linear_edge", "motion_blur")
EDGE_MODES = ("none", "gaussian_edge", "linear_edge")
GAUSSIAN_SIGMA = 2.0
GAUSSIAN_TRUNCATE = 3.0  # support radius = sigma * truncate = 6px
LINEAR_RAMP = 5.0
MOTION_KERNEL_LENGTH = 7
ENLARGE_FACTOR_RANGE = (1.2, 1.5)
COLOR_JITTER = 0.1


@dataclass
class BlendSpec:
    mode: str
    cutout: InstanceCutout
    target_box: Box
    scale_factor: float


def resize_cutout(cutout: InstanceCutout, f: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale a cutout's pixels (bilinear) and mask (thresholded bilinear) by f."""
    w = max(int(round(cutout.width * f)), 1)
    h = max(int(round(cutout.height * f)), 1)
    pixels = np.asarray(
        Image.fromarray(cutout.pixels).resize((w, h), Image.BILINEAR), dtype=np.uint8
    )
    mask_f = np.asarray(
        Image.fromarray(cutout.mask.astype(np.float32), mode="F").resize(
            (w, h), Image.BILINEAR
        )
    )
    return pixels, mask_f >= 0.5


def _alpha_matte(mask: np.ndarray, mode: str) -> tuple[np.ndarray, int]:
    """Alpha matte for a mask under a blend mode, plus the padding it needs.

    gaussian_edge blurs the mask outward, so its matte is computed on a
    zero-padded canvas (support radius = sigma * truncate); the other modes
    never reach outside the mask.
    """
    if mode in ("none", "motion_blur"):
        return mask.astype(np.float64), 0
    if mode == "gaussian_edge":
        pad = int(GAUSSIAN_SIGMA * GAUSSIAN_TRUNCATE)
        padded = np.pad(mask.astype(np.float64), pad)
        alpha = ndimage.gaussian_filter(padded, sigma=GAUSSIAN_SIGMA, truncate=GAUSSIAN_TRUNCATE)
        return np.clip(alpha, 0.0, 1.0), pad
    if mode == "linear_edge":
        # Pad with background so the raster edge counts as mask boundary
        # (tight cutouts always touch all four raster edges).
        dist = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
        return np.clip(dist / LINEAR_RAMP, 0.0, 1.0), 0
    raise ValueError(f"unknown blend mode {mode!r}")


def _composite(
    image_pixels: np.ndarray,
    cutout_pixels: np.ndarray,
    cutout_mask: np.ndarray,
    top_left: tuple[int, int],
    mode: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Alpha-composite a cutout raster onto the image at top_left (x, y).

    The paste region may extend past the image borders; it is cropped. Returns
    (new image, pasted mask) where the pasted mask marks alpha > 0.5 pixels.
    """
    img_h, img_w = image_pixels.shape[:2]
    x, y = top_left

    alpha, pad = _alpha_matte(cutout_mask, mode)
    if pad:
        color = np.pad(cutout_pixels, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
        x, y = x - pad, y - pad
    else:
        color = cutout_pixels
    ch, cw = alpha.shape

    # Crop the paste rect to the image.
    sx0, sy0 = max(0, -x), max(0, -y)
    dx0, dy0 = max(0, x), max(0, y)
    dx1, dy1 = min(img_w, x + cw), min(img_h, y + ch)
    if dx0 >= dx1 or dy0 >= dy1:
        return image_pixels.copy(), np.zeros((img_h, img_w), dtype=bool)
    sx1, sy1 = sx0 + (dx1 - dx0), sy0 + (dy1 - dy0)

    out = image_pixels.copy()
    a = alpha[sy0:sy1, sx0:sx1][..., None]
    region = out[dy0:dy1, dx0:dx1].astype(np.float64)
    blended = a * color[sy0:sy1, sx0:sx1].astype(np.float64) + (1.0 - a) * region
    out[dy0:dy1, dx0:dx1] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)

    pasted = np.zeros((img_h, img_w), dtype=bool)
    pasted[dy0:dy1, dx0:dx1] = alpha[sy0:sy1, sx0:sx1] > 0.5
    return out, pasted


def _motion_blur(pixels: np.ndarray, angle: float) -> np.ndarray:
    """Convolve the whole image with a normalized line kernel."""
    n = MOTION_KERNEL_LENGTH
    kernel = np.zeros((n, n))
    c = (n - 1) / 2.0
    for t in np.linspace(-c, c, n):
        fx, fy = c + t * math.cos(angle), c + t * math.sin(angle)
        x0, y0 = int(math.floor(fx)), int(math.floor(fy))
        for dx in (0, 1):
            for dy in (0, 1):
                if 0 <= x0 + dx < n and 0 <= y0 + dy < n:
                    wx = 1.0 - abs(fx - (x0 + dx))
                    wy = 1.0 - abs(fy - (y0 + dy))
                    kernel[y0 + dy, x0 + dx] += wx * wy
    kernel /= kernel.sum()
    out = np.empty_like(pixels)
    for ch in range(pixels.shape[2]):
        blurred = ndimage.convolve(pixels[..., ch].astype(np.float64), kernel, mode="nearest")
        out[..., ch] = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    return out


def blend(
    image_pixels: np.ndarray, spec: BlendSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Paste a cutout into its target box with the given blend mode.

    The cutout is scaled by the spec's factor, centered in the target box and
    alpha-composited. For motion_blur the paste is hard and the whole result
    is then blurred along a random direction.

    Raises:
        ValueError: when the scaled cutout does not fit inside the image.
    """
    pixels, mask = resize_cutout(spec.cutout, spec.scale_factor)
    h, w = mask.shape
    cx, cy = spec.target_box.center
    x = int(round(cx - w / 2.0))
    y = int(round(cy - h / 2.0))
    img_h, img_w = image_pixels.shape[:2]
    if x < 0 or y < 0 or x + w > img_w or y + h > img_h:
        raise ValueError(
            f"scaled cutout {w}x{h} at ({x}, {y}) exceeds image {img_w}x{img_h}"
        )
    out, pasted = _composite(image_pixels, pixels, mask, (x, y), spec.mode)
    if spec.mode == "motion_blur":
        out = _motion_blur(out, float(rng.uniform(0.0, math.pi)))
    return out, pasted


def enlarge_reblend(
    image: AnnotatedImage,
    obj: ObjectAnnotation,
    rng: np.random.Generator,
    factor_range: tuple[float, float] = ENLARGE_FACTOR_RANGE,
    color_jitter: float = COLOR_JITTER,
    mode: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Re-blend an up-scaled, color-jittered copy of an object over itself.

    The cutout is scaled about the object's center so the enlarged instance
    covers the original; parts crossing the image border are cropped. Returns
    (new image pixels, enlarged instance mask).
    """
    if obj.mask is None:
        raise ValueError("enlarge_reblend requires an instance mask")
    cutout = extract_cutout(image, obj)
    f = float(rng.uniform(*factor_range))
    factors = rng.uniform(1.0 - color_jitter, 1.0 + color_jitter, size=3)
    mode = mode if mode is not None else str(rng.choice(EDGE_MODES))

    jittered = np.clip(
        np.rint(cutout.pixels.astype(np.float64) * factors[None, None, :]), 0, 255
    ).astype(np.uint8)
    scaled_pixels, scaled_mask = resize_cutout(
        InstanceCutout(
            class_id=cutout.class_id,
            pixels=jittered,
            mask=cutout.mask,
            source_image_id=cutout.source_image_id,
            original_shape=cutout.original_shape,
        ),
        f,
    )
    tb = tight_box(obj.mask)
    cx, cy = tb.center
    h, w = scaled_mask.shape
    x = int(round(cx - w / 2.0))
    y = int(round(cy - h / 2.0))
    return _composite(image.pixels, scaled_pixels, scaled_mask, (x, y), mode)


def random_placement(
    image: AnnotatedImage,
    db: InstanceDatabase,
    hist: ShapeHistogram,
    rng: np.random.Generator,
    attempts: int = 200,
) -> list[PlacementCandidate]:
    """Random-placement baseline selector: uniformly drawn boxes, uniformly
    drawn classes, no scorer. Matching, blending and annotation updates are
    the shared pipeline path downstream."""
    class_ids = db.class_ids
    if not class_ids:
        return []
    out: list[PlacementCandidate] = []
    for _ in range(attempts):
        try:
            box = sample_box(hist, image.width, image.height, rng)
        except NoFitError:
            continue
        class_id = int(class_ids[int(rng.integers(len(class_ids)))])
        cand = PlacementCandidate(box=box, origin="sampled")
        cand.selected_class = class_id
        out.append(cand)
    return out
