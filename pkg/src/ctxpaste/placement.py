"""Candidate box proposal and context-driven selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .context_extract import make_contextual
from .dataset_io.types import AnnotatedImage
from .errors import NoFitError
from .geometry import Box, iou
from .scorer_gateway import ScorerGateway, ScoreVector
from .shape_model import ShapeHistogram, sample_box

logger = logging.getLogger(__name__)

NUM_CANDIDATES = 200
NEIGHBORS_PER_OBJECT = 2
SCORE_THRESHOLD = 0.7
MAX_PLACEMENTS = 2
PLACEMENT_IOU_MAX = 0.3
NEIGHBOR_SHIFT = 0.5  # center jitter, fraction of the object's box side
NEIGHBOR_SCALE = (0.9, 1.1)  # width/height jitter


@dataclass
class PlacementCandidate:
    box: Box
    origin: str  # "sampled" | "neighbor"
    scores: ScoreVector | None = field(default=None, repr=False)
    selected_class: int | None = None

    @property
    def selected_score(self) -> float:
        if self.selected_class is None or self.scores is None:
            return 0.0
        return float(self.scores[self.selected_class])


def _neighbor_box(
    obj_box: Box, image_w: int, image_h: int, rng: np.random.Generator
) -> Box | None:
    w = obj_box.width * rng.uniform(*NEIGHBOR_SCALE)
    h = obj_box.height * rng.uniform(*NEIGHBOR_SCALE)
    cx, cy = obj_box.center
    cx += rng.uniform(-NEIGHBOR_SHIFT, NEIGHBOR_SHIFT) * obj_box.width
    cy += rng.uniform(-NEIGHBOR_SHIFT, NEIGHBOR_SHIFT) * obj_box.height
    candidate = Box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    return candidate.clip(image_w, image_h)


def propose(
    image: AnnotatedImage,
    hist: ShapeHistogram,
    rng: np.random.Generator,
    n_candidates: int = NUM_CANDIDATES,
    neighbors_per_object: int = NEIGHBORS_PER_OBJECT,
) -> list[PlacementCandidate]:
    """Propose placement candidates for one image.

    Exactly n_candidates boxes sampled from the shape distribution (draws
    that cannot fit are dropped with a warning), plus neighbors_per_object
    jittered copies of every ground-truth object's box. Neighbor boxes are
    clipped to the image or discarded when clipping empties them.
    """
    candidates: list[PlacementCandidate] = []
    for _ in range(n_candidates):
        try:
            box = sample_box(hist, image.width, image.height, rng)
        except NoFitError:
            logger.warning("image %s: dropping unfittable candidate", image.image_id)
            continue
        candidates.append(PlacementCandidate(box=box, origin="sampled"))

    for obj in image.objects:
        if obj.is_crowd:
            continue
        for _ in range(neighbors_per_object):
            box = _neighbor_box(obj.box, image.width, image.height, rng)
            if box is not None:
                candidates.append(PlacementCandidate(box=box, origin="neighbor"))
    return candidates


def select(
    candidates: list[PlacementCandidate],
    gateway: ScorerGateway,
    image: AnnotatedImage,
    rng: np.random.Generator,
    max_placements: int = MAX_PLACEMENTS,
    threshold: float = SCORE_THRESHOLD,
    variants: int = 3,
    overlap_iou: float = PLACEMENT_IOU_MAX,
) -> list[PlacementCandidate]:
    """Score candidates and keep the best non-colliding placements.

    A candidate is eligible when its best non-background class scores
    strictly above the threshold. Eligible candidates are ranked by that
    score (ties by candidate index) and kept greedily while pairwise IoU
    with already-kept boxes stays below overlap_iou, up to max_placements.
    """
    # One batched scoring pass: k contextual variants per candidate, in
    # candidate order, averaged per candidate (same draws and same arithmetic
    # as per-candidate averaged_score calls).
    extractions = [
        make_contextual(image, cand.box, rng)
        for cand in candidates
        for _ in range(variants)
    ]
    scores = gateway.score_batch(extractions)

    eligible: list[tuple[float, int, PlacementCandidate]] = []
    for index, cand in enumerate(candidates):
        cand.scores = np.mean(scores[index * variants : (index + 1) * variants], axis=0)
        best_class = int(np.argmax(cand.scores[1:])) + 1
        score = float(cand.scores[best_class])
        if score > threshold:
            cand.selected_class = best_class
            eligible.append((score, index, cand))

    eligible.sort(key=lambda t: (-t[0], t[1]))
    kept: list[PlacementCandidate] = []
    for _, _, cand in eligible:
        if len(kept) >= max_placements:
            break
        if all(iou(cand.box, other.box) < overlap_iou for other in kept):
            kept.append(cand)
    return kept
