"""End-to-end augmentation: configuration, per-image decisions, schedules,
dataset emission, statistics, and contextual-training-set export."""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import annotation_update, blender, context_extract, instance_db, placement, shape_model, weak_instances
from .dataset_io.types import AnnotatedImage
from .dataset_io.writer import write_dataset
from .errors import ConfigError, NotFound
from .geometry import Box
from .rng import derive_rng
from .scorer_gateway import ScorerGateway, make_scorer

logger = logging.getLogger(__name__)

MODES = ("context", "random", "enlarge")
SCHEDULES = ("constant", "linear_decay")
FORMATS = ("coco", "voc")


@dataclass
class AugmentConfig:
    mode: str = "context"
    paste_probability: float = 0.5
    schedule: str = "constant"
    max_placements: int = 2
    threshold: float = 0.7
    variants: int = 3
    candidates: int = 200
    bg_ratio: int = 3
    seed: int = 0
    scorer: str = "uniform"
    format_in: str = "coco"
    format_out: str = "coco"
    workers: int = 1
    min_pixels: int = 100

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.paste_probability <= 1.0:
            raise ConfigError(f"paste probability must be in [0, 1], got {self.paste_probability}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.max_placements < 0:
            raise ConfigError("max_placements must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.variants < 1:
            raise ConfigError("variants must be >= 1")
        if self.candidates < 1:
            raise ConfigError("candidates must be >= 1")
        if self.bg_ratio < 0:
            raise ConfigError("bg_ratio must be >= 0")
        if self.format_in not in FORMATS or self.format_out not in FORMATS:
            raise ConfigError(f"formats must be one of {FORMATS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.min_pixels < 1:
            raise ConfigError("min_pixels must be >= 1")

    def config_hash(self) -> str:
        # workers is an execution detail: output is identical across worker
        # counts, so it must not perturb the recorded hash.
        fields = {k: v for k, v in asdict(self).items() if k != "workers"}
        payload = json.dumps(fields, sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def schedule_probability(cfg: AugmentConfig, index: int, total: int) -> float:
    """Per-image augmentation probability at position index of total."""
    if cfg.schedule == "linear_decay" and total > 0:
        return cfg.paste_probability * (1.0 - index / total)
    return cfg.paste_probability


def decide_augment(cfg: AugmentConfig, image_id: str, index: int, total: int) -> bool:
    p = schedule_probability(cfg, index, total)
    return float(derive_rng(cfg.seed, image_id, "decide").random()) < p


def _box_list(box: Box) -> list[float]:
    return [round(v, 3) for v in box.as_tuple()]


def _apply_placements(
    image: AnnotatedImage,
    selected: list[placement.PlacementCandidate],
    db: instance_db.InstanceDatabase,
    cfg: AugmentConfig,
    rng_match: np.random.Generator,
    rng_blend: np.random.Generator,
) -> tuple[AnnotatedImage, list[dict]]:
    """Shared paste loop: match, blend, and update annotations for up to
    max_placements candidates, in order."""
    pixels = image.pixels
    objects = list(image.objects)
    semantic = image.semantic_map
    records: list[dict] = []

    for cand in selected:
        if len(records) >= cfg.max_placements:
            break
        matched = instance_db.match(cand.box, cand.selected_class, db, rng_match)
        if matched is None:
            logger.info(
                "image %s: no cutout of class %d fits candidate, skipping",
                image.image_id,
                cand.selected_class,
            )
            continue
        cutout, factor = matched
        mode = blender.BLEND_MODES[int(rng_blend.integers(len(blender.BLEND_MODES)))]
        spec = blender.BlendSpec(
            mode=mode, cutout=cutout, target_box=cand.box, scale_factor=factor
        )
        try:
            pixels, pasted = blender.blend(pixels, spec, rng_blend)
        except ValueError as e:
            logger.warning("image %s: blend failed (%s), skipping", image.image_id, e)
            continue

        use_instances = bool(objects) and all(o.mask is not None for o in objects)
        if semantic is not None and use_instances:
            discarded = annotation_update.occlusion_discards(objects, pasted)
            semantic = annotation_update.update_semantic(
                semantic, pasted, cand.selected_class, [objects[i].mask for i in discarded]
            )
        elif semantic is not None:
            semantic = annotation_update.update_semantic(
                semantic, pasted, cand.selected_class, []
            )
        if use_instances or not objects:
            objects = annotation_update.update_instances(objects, pasted, cand.selected_class)
        else:
            objects = annotation_update.update_boxes(objects, pasted, cand.selected_class)

        records.append(
            {
                "class_id": cand.selected_class,
                "origin": cand.origin,
                "score": None if cand.scores is None else round(cand.selected_score, 6),
                "box": _box_list(cand.box),
                "pasted_box": _box_list(annotation_update.tight_box(pasted)),
                "blend_mode": mode,
                "scale_factor": round(factor, 6),
                "cutout_source": cutout.source_image_id,
            }
        )

    out = AnnotatedImage(
        image_id=image.image_id,
        pixels=pixels,
        objects=objects,
        semantic_map=semantic,
        source=image.source,
    )
    return out, records


def _enlarge_image(
    image: AnnotatedImage, cfg: AugmentConfig, rng_blend: np.random.Generator
) -> tuple[AnnotatedImage, list[dict]]:
    """Enlarge-reblend every masked instance in place, sequentially."""
    if not image.has_instance_masks():
        logger.info("image %s: missing instance masks, enlarge skipped", image.image_id)
        return image, []
    current = AnnotatedImage(
        image_id=image.image_id,
        pixels=image.pixels,
        objects=list(image.objects),
        semantic_map=image.semantic_map,
        source=image.source,
    )
    records: list[dict] = []
    while True:
        obj = next(
            (o for o in current.objects if not o.is_synthetic and o.mask is not None),
            None,
        )
        if obj is None:
            break
        factor = float(rng_blend.uniform(*blender.ENLARGE_FACTOR_RANGE))
        mode = blender.EDGE_MODES[int(rng_blend.integers(len(blender.EDGE_MODES)))]
        pixels, enlarged = blender.enlarge_reblend(
            current, obj, rng_blend, factor_range=(factor, factor), mode=mode
        )
        others = [o for o in current.objects if o is not obj]
        semantic = current.semantic_map
        if semantic is not None:
            discarded = annotation_update.occlusion_discards(others, enlarged)
            semantic = annotation_update.update_semantic(
                semantic, enlarged, obj.class_id, [others[i].mask for i in discarded]
            )
        objects = annotation_update.update_instances(others, enlarged, obj.class_id)
        records.append(
            {
                "class_id": obj.class_id,
                "origin": "enlarge",
                "score": None,
                "box": _box_list(obj.box),
                "pasted_box": _box_list(annotation_update.tight_box(enlarged)),
                "blend_mode": mode,
                "scale_factor": round(factor, 6),
                "cutout_source": image.image_id,
            }
        )
        current = AnnotatedImage(
            image_id=current.image_id,
            pixels=pixels,
            objects=objects,
            semantic_map=semantic,
            source=current.source,
        )
    return current, records


def augment_image(
    image: AnnotatedImage,
    cfg: AugmentConfig,
    hist: shape_model.ShapeHistogram,
    db: instance_db.InstanceDatabase | None,
    gateway: ScorerGateway | None,
    selector=None,
    dump_candidates: bool = False,
) -> tuple[AnnotatedImage, dict]:
    """Augment one image according to the configured mode.

    A custom selector(image, rng) -> list[PlacementCandidate] may be injected
    (dependency-injection hook; mode-differences live entirely in selection).
    """
    record: dict = {"image_id": image.image_id, "placements": []}

    if cfg.mode == "enlarge":
        out, records = _enlarge_image(image, cfg, derive_rng(cfg.seed, image.image_id, "blend"))
        record["placements"] = records
        return out, record

    rng_select = derive_rng(cfg.seed, image.image_id, "select")
    if selector is not None:
        selected = selector(image, rng_select)
    elif cfg.mode == "random":
        selected = blender.random_placement(
            image, db, hist, rng_select, attempts=cfg.candidates
        )
    else:
        candidates = placement.propose(
            image, hist, derive_rng(cfg.seed, image.image_id, "propose"),
            n_candidates=cfg.candidates,
        )
        selected = placement.select(
            candidates,
            gateway,
            image,
            rng_select,
            max_placements=cfg.max_placements,
            threshold=cfg.threshold,
            variants=cfg.variants,
        )
        if dump_candidates:
            record["candidates"] = [
                {
                    "box": _box_list(c.box),
                    "origin": c.origin,
                    "scores": None if c.scores is None else [round(float(s), 6) for s in c.scores],
                    "selected_class": c.selected_class,
                }
                for c in candidates
            ]

    out, records = _apply_placements(
        image,
        selected,
        db,
        cfg,
        derive_rng(cfg.seed, image.image_id, "match"),
        derive_rng(cfg.seed, image.image_id, "blend"),
    )
    record["placements"] = records
    return out, record


def prepare_weak_masks(dataset: list[AnnotatedImage], seed: int) -> set[str]:
    """Attach approximated instance masks where only semantic maps exist.

    Returns the ids of images that received weak masks (their objects are
    quality-gated before entering the cutout database).
    """
    weak_ids: set[str] = set()
    for image in dataset:
        if image.semantic_map is None or not image.objects:
            continue
        if any(o.mask is not None for o in image.objects):
            continue
        rng = derive_rng(seed, image.image_id, "weak")
        weak_instances.attach_approximate_masks(image.semantic_map, image.objects, rng)
        weak_ids.add(image.image_id)
    if weak_ids:
        logger.info("approximated instance masks for %d images", len(weak_ids))
    return weak_ids


def augment_dataset(
    cfg: AugmentConfig,
    dataset: list[AnnotatedImage],
    scorer=None,
    selector=None,
) -> tuple[list[AnnotatedImage], list[dict]]:
    """Augment every image independently with the scheduled probability.

    Returns (output images in input order, per-image decision records).
    The scorer argument overrides cfg.scorer (used for injection in tests).
    """
    cfg.validate()
    total = len(dataset)
    if total == 0:
        return [], []

    hist = shape_model.fit(dataset) if any(im.objects for im in dataset) else None
    may_augment = hist is not None and cfg.paste_probability > 0.0

    db = None
    gateway = None
    if may_augment:
        weak_ids = prepare_weak_masks(dataset, cfg.seed)
        if cfg.mode in ("context", "random"):
            def weak_gate(image, obj):
                if image.image_id not in weak_ids:
                    return True
                return weak_instances.quality_filter(obj.mask, obj.box)

            db = instance_db.build(dataset, cfg.min_pixels, object_filter=weak_gate)
        if cfg.mode == "context" and selector is None:
            num_classes = max(o.class_id for im in dataset for o in im.objects)
            gateway = ScorerGateway(
                scorer
                if scorer is not None
                else make_scorer(cfg.scorer, dataset, num_classes)
            )
    own_scorer = gateway is not None and scorer is None

    def job(index: int) -> tuple[AnnotatedImage, dict]:
        image = dataset[index]
        p = schedule_probability(cfg, index, total)
        record = {
            "image_id": image.image_id,
            "probability": round(p, 6),
            "augmented": False,
            "placements": [],
        }
        if not may_augment or not decide_augment(cfg, image.image_id, index, total):
            return image, record
        out, aug_record = augment_image(
            image, cfg, hist, db, gateway, selector=selector
        )
        record["augmented"] = True
        record["placements"] = aug_record["placements"]
        return out, record

    try:
        if cfg.workers == 1:
            results = [job(i) for i in range(total)]
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(job, range(total)))
    finally:
        if own_scorer:
            gateway.close()

    images = [r[0] for r in results]
    records = [r[1] for r in results]
    return images, records


def write_augmented(
    cfg: AugmentConfig,
    images: list[AnnotatedImage],
    records: list[dict],
    out_dir: str | Path,
    class_names: list[str],
    category_mapping: dict | None = None,
) -> dict:
    """Serialize an augmented dataset; cleans up partial output on failure."""
    out_dir = Path(out_dir)
    try:
        return write_dataset(
            images,
            cfg.format_out,
            out_dir,
            class_names,
            category_mapping=category_mapping,
            seed=cfg.seed,
            config_hash=cfg.config_hash(),
            image_records=records,
        )
    except Exception:
        shutil.rmtree(out_dir, ignore_errors=True)
        raise


def _split_for_regime(dataset: list[AnnotatedImage]) -> tuple[list[AnnotatedImage], list[AnnotatedImage]]:
    """Split images so per-class positive counts stay balanced across halves."""
    class_ids = sorted({o.class_id for im in dataset for o in im.objects if not o.is_crowd})
    index = {c: i for i, c in enumerate(class_ids)}
    totals = np.zeros(len(class_ids), dtype=np.int64)
    per_image = []
    for im in dataset:
        counts = np.zeros(len(class_ids), dtype=np.int64)
        for o in im.objects:
            if not o.is_crowd:
                counts[index[o.class_id]] += 1
        per_image.append(counts)
        totals += counts

    for c, count in zip(class_ids, totals):
        if count < 2:
            logger.warning(
                "class %d has %d positive(s); it will live wholly in one split", c, count
            )

    order = sorted(
        range(len(dataset)),
        key=lambda i: (-int(per_image[i].sum()), dataset[i].image_id),
    )
    sums = [np.zeros(len(class_ids), dtype=np.int64) for _ in range(2)]
    assignment = [0] * len(dataset)
    for i in order:
        if per_image[i].sum() == 0:
            choice = 0 if sums[0].sum() <= sums[1].sum() else 1
        else:
            imbalance = [
                int(np.abs((sums[side] + per_image[i]) - sums[1 - side]).sum())
                for side in range(2)
            ]
            choice = 0 if imbalance[0] <= imbalance[1] else 1
        assignment[i] = choice
        sums[choice] += per_image[i]

    diff = np.abs(sums[0] - sums[1])
    for c, d in zip(class_ids, diff):
        if d > 1:
            logger.warning("class %d positives differ by %d between splits", c, int(d))
    split_a = [dataset[i] for i in range(len(dataset)) if assignment[i] == 0]
    split_b = [dataset[i] for i in range(len(dataset)) if assignment[i] == 1]
    return split_a, split_b


def export_context_set(
    cfg: AugmentConfig,
    dataset: list[AnnotatedImage],
    out_dir: str | Path,
    regime: str = "small_data",
) -> dict:
    """Export contextual training images (PNGs + labels CSV).

    small_data: one export over the whole dataset. normal_data: two exports
    with per-class positive counts balanced between the splits.
    """
    cfg.validate()
    if regime not in ("small_data", "normal_data"):
        raise ConfigError(f"regime must be small_data or normal_data, got {regime!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hist = shape_model.fit(dataset)
    hist.save(out_dir / "shape_histogram.json")
    info: dict = {"regime": regime, "exports": {}}
    if regime == "small_data":
        stream = context_extract.gen_training_set(dataset, hist, cfg.seed, cfg.bg_ratio)
        count, csv_path = context_extract.export_training_set(stream, out_dir)
        info["exports"]["all"] = {"count": count, "labels": str(csv_path)}
    else:
        for name, part in zip(("split_a", "split_b"), _split_for_regime(dataset)):
            stream = context_extract.gen_training_set(part, hist, cfg.seed, cfg.bg_ratio)
            count, csv_path = context_extract.export_training_set(stream, out_dir / name)
            info["exports"][name] = {"count": count, "labels": str(csv_path)}
    return info


def stats(dataset: list[AnnotatedImage]) -> dict:
    """Dataset report: per-class instance counts, shape histogram, synthetic counts."""
    per_class: dict[int, dict[str, int]] = {}
    for im in dataset:
        for o in im.objects:
            entry = per_class.setdefault(o.class_id, {"real": 0, "synthetic": 0})
            entry["synthetic" if o.is_synthetic else "real"] += 1
    report = {
        "images": len(dataset),
        "objects": sum(len(im.objects) for im in dataset),
        "synthetic_objects": sum(
            1 for im in dataset for o in im.objects if o.is_synthetic
        ),
        "per_class": {str(k): v for k, v in sorted(per_class.items())},
    }
    if any(im.objects for im in dataset):
        report["shape_histogram"] = shape_model.fit(dataset).to_dict()
    return report


def _draw_candidates(image: AnnotatedImage, candidates: list[dict]) -> np.ndarray:
    """Overlay candidate boxes, colored by their best non-background score."""
    canvas = Image.fromarray(image.pixels.copy())
    draw = ImageDraw.Draw(canvas)
    for cand in candidates:
        x0, y0, x1, y1 = cand["box"]
        score = 0.0
        if cand.get("scores"):
            score = max(cand["scores"][1:])
        color = (int(255 * (1 - score)), int(255 * score), 40)
        width = 2 if cand.get("selected_class") else 1
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=color, width=width)
    return np.asarray(canvas)


def preview(
    cfg: AugmentConfig,
    dataset: list[AnnotatedImage],
    image_id: str,
    out_dir: str | Path,
    scorer=None,
) -> dict:
    """Write original / augmented / side-by-side / candidate-overlay images."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {im.image_id: i for i, im in enumerate(dataset)}
    if image_id not in by_id:
        raise NotFound(f"image id {image_id!r} not in dataset")
    index = by_id[image_id]
    image = dataset[index]

    hist = shape_model.fit(dataset)
    prepare_weak_masks(dataset, cfg.seed)
    db = instance_db.build(dataset, cfg.min_pixels)
    gateway = None
    if cfg.mode == "context":
        num_classes = max((o.class_id for im in dataset for o in im.objects), default=0)
        gateway = ScorerGateway(
            scorer if scorer is not None else make_scorer(cfg.scorer, dataset, num_classes)
        )

    try:
        if decide_augment(cfg, image_id, index, len(dataset)):
            augmented, record = augment_image(
                image, cfg, hist, db, gateway, dump_candidates=True
            )
        else:
            augmented, record = image, {"image_id": image_id, "placements": [], "candidates": []}
    finally:
        if gateway is not None and scorer is None:
            gateway.close()

    paths = {
        "original": out_dir / f"{image_id}_original.png",
        "augmented": out_dir / f"{image_id}_augmented.png",
        "side_by_side": out_dir / f"{image_id}_side_by_side.png",
        "candidates": out_dir / f"{image_id}_candidates.png",
    }
    Image.fromarray(image.pixels).save(paths["original"])
    Image.fromarray(augmented.pixels).save(paths["augmented"])
    side = np.concatenate([image.pixels, augmented.pixels], axis=1)
    Image.fromarray(side).save(paths["side_by_side"])
    overlay = _draw_candidates(image, record.get("candidates", []))
    Image.fromarray(overlay).save(paths["candidates"])
    return {
        "paths": {k: str(v) for k, v in paths.items()},
        "record": record,
    }
