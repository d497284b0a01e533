"""Command-line interface.

Subcommands: augment, export-context, stats, preview, validate.
Exit codes: 0 ok, 2 config error, 3 scorer error, 4 data integrity error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .dataset_io import load_coco, load_voc
from .errors import (
    ConfigError,
    CtxPasteError,
    EmptyDistribution,
    IntegrityError,
    IoError,
    MissingMasks,
    NotFound,
    ParseError,
    ProtocolError,
    ScorerUnavailable,
    UnsupportedMask,
)
from .pipeline import (
    AugmentConfig,
    augment_dataset,
    export_context_set,
    preview,
    stats,
    write_augmented,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCORER = 3
EXIT_DATA = 4

# AugmentConfig fields settable from a config file or the corresponding flag.
_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(AugmentConfig)}
_INT_FIELDS = {
    "max_placements", "variants", "candidates", "bg_ratio", "seed", "workers", "min_pixels",
}
_FLOAT_FIELDS = {"paste_probability", "threshold"}


def load_config_file(path: str | Path) -> dict:
    """Parse a `key = value` config file (# starts a comment)."""
    values: dict = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key in _INT_FIELDS:
                values[key] = int(value)
            elif key in _FLOAT_FIELDS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from e
    return values


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (key = value lines); flags override")
    parser.add_argument("--mode", choices=("context", "random", "enlarge"))
    parser.add_argument("--prob", dest="paste_probability", type=float,
                        help="paste probability p0 (default 0.5)")
    parser.add_argument("--schedule", choices=("constant", "linear_decay"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--scorer",
                        help="scorer backend: uniform | oracle | process:<cmd> | tcp:<host:port>")
    parser.add_argument("--format-in", dest="format_in", choices=("coco", "voc"))
    parser.add_argument("--format-out", dest="format_out", choices=("coco", "voc"))
    parser.add_argument("--max-paste", dest="max_placements", type=int)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--candidates", type=int)
    parser.add_argument("--variants", type=int)
    parser.add_argument("--bg-ratio", dest="bg_ratio", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--min-pixels", dest="min_pixels", type=int)


def _add_input_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True,
                        help="COCO: annotations JSON; VOC: dataset root or Annotations dir")
    parser.add_argument("--image-root", help="image directory (default: inferred)")


def build_config(args: argparse.Namespace) -> AugmentConfig:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _CONFIG_FIELDS:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    cfg = AugmentConfig(**values)
    cfg.validate()
    return cfg


def load_dataset(cfg: AugmentConfig, args: argparse.Namespace):
    """Load the input dataset; returns (images, class_names, category_mapping)."""
    input_path = Path(args.input)
    if cfg.format_in == "coco":
        image_root = args.image_root or input_path.parent
        images, mapping, names = load_coco(input_path, image_root)
        return images, names, mapping
    root = input_path
    xml_dir = root / "Annotations" if (root / "Annotations").is_dir() else root
    if args.image_root:
        image_dir = Path(args.image_root)
    else:
        for candidate in ("JPEGImages", "Images"):
            if (root / candidate).is_dir():
                image_dir = root / candidate
                break
        else:
            image_dir = root
    seg_class = root / "SegmentationClass"
    seg_object = root / "SegmentationObject"
    images, mapping, names = load_voc(
        xml_dir,
        image_dir,
        seg_class if seg_class.is_dir() else None,
        seg_object if seg_object.is_dir() else None,
    )
    return images, names, mapping


def cmd_augment(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    dataset, class_names, mapping = load_dataset(cfg, args)
    images, records = augment_dataset(cfg, dataset)
    write_augmented(cfg, images, records, args.output, class_names, mapping)
    pastes = sum(len(r["placements"]) for r in records)
    augmented = sum(1 for r in records if r["augmented"])
    print(
        f"augmented {augmented}/{len(images)} images ({pastes} pastes) -> {args.output}"
    )
    return EXIT_OK


def cmd_export_context(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    dataset, _, _ = load_dataset(cfg, args)
    info = export_context_set(cfg, dataset, args.output, regime=args.regime)
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    dataset, _, _ = load_dataset(cfg, args)
    report = stats(dataset)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def cmd_preview(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    dataset, _, _ = load_dataset(cfg, args)
    info = preview(cfg, dataset, args.image_id, args.output)
    print(json.dumps(info["paths"], indent=2, sort_keys=True))
    if args.dump_candidates:
        dump_path = Path(args.output) / f"{args.image_id}_candidates.json"
        dump_path.write_text(
            json.dumps(info["record"].get("candidates", []), indent=2, sort_keys=True)
            + "\n",
            encoding="utf-8",
        )
        print(f"candidates dumped to {dump_path}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    dataset, class_names, _ = load_dataset(cfg, args)
    report = {
        "images": len(dataset),
        "objects": sum(len(im.objects) for im in dataset),
        "classes": len(class_names),
        "with_instance_masks": sum(1 for im in dataset if im.has_instance_masks()),
        "with_semantic_map": sum(1 for im in dataset if im.semantic_map is not None),
        "ok": True,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxpaste",
        description="Context-driven copy-paste augmentation for detection/segmentation datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_aug = sub.add_parser("augment", help="augment a dataset and write it out")
    _add_config_flags(p_aug)
    _add_input_flags(p_aug)
    p_aug.add_argument("--output", required=True)
    p_aug.set_defaults(fn=cmd_augment)

    p_exp = sub.add_parser("export-context", help="export contextual images for scorer training")
    _add_config_flags(p_exp)
    _add_input_flags(p_exp)
    p_exp.add_argument("--output", required=True)
    p_exp.add_argument("--regime", choices=("small_data", "normal_data"), default="small_data")
    p_exp.set_defaults(fn=cmd_export_context)

    p_stats = sub.add_parser("stats", help="dataset statistics report")
    _add_config_flags(p_stats)
    _add_input_flags(p_stats)
    p_stats.add_argument("--output", help="write the JSON report here instead of stdout")
    p_stats.set_defaults(fn=cmd_stats)

    p_prev = sub.add_parser("preview", help="visualize augmentation for one image")
    _add_config_flags(p_prev)
    _add_input_flags(p_prev)
    p_prev.add_argument("--image-id", required=True)
    p_prev.add_argument("--output", required=True)
    p_prev.add_argument("--dump-candidates", action="store_true")
    p_prev.set_defaults(fn=cmd_preview)

    p_val = sub.add_parser("validate", help="load a dataset and check its integrity")
    _add_config_flags(p_val)
    _add_input_flags(p_val)
    p_val.set_defaults(fn=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScorerUnavailable, ProtocolError) as e:
        print(f"scorer error: {e}", file=sys.stderr)
        return EXIT_SCORER
    except (
        ParseError,
        IntegrityError,
        UnsupportedMask,
        MissingMasks,
        EmptyDistribution,
        NotFound,
        IoError,
    ) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except CtxPasteError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
