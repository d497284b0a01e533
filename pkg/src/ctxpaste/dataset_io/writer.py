"""Dataset serialization: COCO JSON or VOC XML/PNG, plus the run manifest."""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import IoError
from .rle import encode_rle
from .types import AnnotatedImage

logger = logging.getLogger(__name__)


def _round_corners(box) -> tuple[int, int, int, int]:
    x0, y0 = int(round(box.x_min)), int(round(box.y_min))
    x1, y1 = int(round(box.x_max)), int(round(box.y_max))
    return x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)


def _save_png(path: Path, array: np.ndarray, palette: bool = False) -> None:
    try:
        im = Image.fromarray(array)
        if palette:
            im = im.convert("P")
        im.save(path, format="PNG")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _write_json(path: Path, payload) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _write_coco(images: list[AnnotatedImage], out_dir: Path, class_names: list[str]) -> list[str]:
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    files = []
    doc = {
        "images": [],
        "annotations": [],
        "categories": [
            {"id": i, "name": name} for i, name in enumerate(class_names, start=1)
        ],
    }
    ann_id = 1
    for image in images:
        file_name = f"{image.image_id}.png"
        _save_png(image_dir / file_name, image.pixels)
        files.append(f"images/{file_name}")
        numeric = image.image_id.isdigit()
        doc["images"].append(
            {
                "id": int(image.image_id) if numeric else image.image_id,
                "file_name": file_name,
                "width": image.width,
                "height": image.height,
            }
        )
        for obj in image.objects:
            x0, y0, x1, y1 = _round_corners(obj.box)
            entry = {
                "id": ann_id,
                "image_id": int(image.image_id) if numeric else image.image_id,
                "category_id": obj.class_id,
                "bbox": [x0, y0, x1 - x0, y1 - y0],
                "area": (x1 - x0) * (y1 - y0),
                "iscrowd": int(obj.is_crowd),
            }
            if obj.mask is not None:
                rle = encode_rle(obj.mask)
                entry["segmentation"] = {
                    "counts": rle.counts,
                    "size": [rle.height, rle.width],
                }
                entry["area"] = int(obj.mask.sum())
            doc["annotations"].append(entry)
            ann_id += 1
    _write_json(out_dir / "annotations.json", doc)
    files.append("annotations.json")
    return files


def _voc_xml(image: AnnotatedImage, file_name: str, class_names: list[str]) -> ET.Element:
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = file_name
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(image.width)
    ET.SubElement(size, "height").text = str(image.height)
    ET.SubElement(size, "depth").text = "3"
    for obj in image.objects:
        node = ET.SubElement(root, "object")
        ET.SubElement(node, "name").text = class_names[obj.class_id - 1]
        bnd = ET.SubElement(node, "bndbox")
        x0, y0, x1, y1 = _round_corners(obj.box)
        # Back to VOC's 1-based inclusive convention.
        ET.SubElement(bnd, "xmin").text = str(x0 + 1)
        ET.SubElement(bnd, "ymin").text = str(y0 + 1)
        ET.SubElement(bnd, "xmax").text = str(x1)
        ET.SubElement(bnd, "ymax").text = str(y1)
    return root


def _write_voc(images: list[AnnotatedImage], out_dir: Path, class_names: list[str]) -> list[str]:
    ann_dir = out_dir / "Annotations"
    img_dir = out_dir / "Images"
    cls_dir = out_dir / "SegmentationClass"
    obj_dir = out_dir / "SegmentationObject"
    for d in (ann_dir, img_dir):
        d.mkdir(parents=True, exist_ok=True)
    files = []
    for image in images:
        file_name = f"{image.image_id}.png"
        _save_png(img_dir / file_name, image.pixels)
        files.append(f"Images/{file_name}")
        tree = ET.ElementTree(_voc_xml(image, file_name, class_names))
        ET.indent(tree)
        try:
            tree.write(ann_dir / f"{image.image_id}.xml", encoding="unicode")
        except OSError as e:
            raise IoError(f"cannot write {ann_dir / image.image_id}.xml: {e}") from e
        files.append(f"Annotations/{image.image_id}.xml")

        masks = [o.mask for o in image.objects]
        if masks and all(m is not None for m in masks):
            obj_dir.mkdir(parents=True, exist_ok=True)
            obj_map = np.zeros(image.pixels.shape[:2], dtype=np.uint8)
            for idx, mask in enumerate(masks, start=1):
                obj_map[mask] = idx
            _save_png(obj_dir / file_name, obj_map, palette=True)
            files.append(f"SegmentationObject/{file_name}")

        semantic = image.semantic_map
        if semantic is None and masks and all(m is not None for m in masks):
            semantic = np.zeros(image.pixels.shape[:2], dtype=np.uint8)
            for obj in image.objects:
                semantic[obj.mask] = obj.class_id
        if semantic is not None:
            cls_dir.mkdir(parents=True, exist_ok=True)
            _save_png(cls_dir / file_name, semantic.astype(np.uint8), palette=True)
            files.append(f"SegmentationClass/{file_name}")
    return files


def write_dataset(
    images: list[AnnotatedImage],
    format: str,
    out_dir: str | Path,
    class_names: list[str],
    category_mapping: dict | None = None,
    seed: int | None = None,
    config_hash: str | None = None,
    image_records: list[dict] | None = None,
) -> dict:
    """Write a dataset and its manifest; returns the manifest.

    Output is byte-identical across runs for identical inputs: no timestamps
    are recorded and all JSON is emitted with sorted keys.
    """
    if format not in ("coco", "voc"):
        raise ValueError(f"unknown output format {format!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if format == "coco":
        files = _write_coco(images, out_dir, class_names)
    else:
        files = _write_voc(images, out_dir, class_names)

    synthetic = {
        image.image_id: [i for i, o in enumerate(image.objects) if o.is_synthetic]
        for image in images
        if any(o.is_synthetic for o in image.objects)
    }
    _write_json(out_dir / "synthetic.json", synthetic)
    files.append("synthetic.json")

    manifest = {
        "format": format,
        "files": sorted(files),
        "class_names": class_names,
        "category_mapping": {str(k): v for k, v in (category_mapping or {}).items()},
        "seed": seed,
        "config_hash": config_hash,
        "images": image_records
        if image_records is not None
        else [{"image_id": im.image_id} for im in images],
    }
    _write_json(out_dir / "manifest.json", manifest)
    return manifest
