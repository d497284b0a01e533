"""VOC-style dataset reader: per-image XML plus optional indexed PNG masks."""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import IntegrityError, ParseError
from ..geometry import Box
from .coco import load_rgb
from .types import AnnotatedImage, ObjectAnnotation, normalize_annotations

logger = logging.getLogger(__name__)

VOID_INDEX = 255


def _require(node: ET.Element, tag: str, path: Path) -> ET.Element:
    child = node.find(tag)
    if child is None:
        raise ParseError(f"{path}: missing <{tag}> element")
    return child


def _parse_xml(xml_path: Path) -> tuple[str, list[tuple[str, Box]]]:
    try:
        root = ET.parse(xml_path).getroot()
    except ET.ParseError as e:
        raise ParseError(f"{xml_path}: {e}", offset=e.position[1] if e.position else None) from e
    filename = _require(root, "filename", xml_path).text
    objects: list[tuple[str, Box]] = []
    for obj in root.findall("object"):
        name = _require(obj, "name", xml_path).text
        bnd = _require(obj, "bndbox", xml_path)
        try:
            xmin = float(_require(bnd, "xmin", xml_path).text)
            ymin = float(_require(bnd, "ymin", xml_path).text)
            xmax = float(_require(bnd, "xmax", xml_path).text)
            ymax = float(_require(bnd, "ymax", xml_path).text)
        except (TypeError, ValueError) as e:
            raise ParseError(f"{xml_path}: non-numeric bndbox coordinate") from e
        # VOC uses 1-based inclusive pixel coordinates; convert to 0-based half-open.
        objects.append((name, Box(xmin - 1.0, ymin - 1.0, xmax, ymax)))
    return filename, objects


def load_indexed_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("P") if im.mode == "P" else im.convert("L"))


def load_voc(
    xml_dir: str | Path,
    image_dir: str | Path,
    seg_class_dir: str | Path | None = None,
    seg_object_dir: str | Path | None = None,
) -> tuple[list[AnnotatedImage], dict[str, int], list[str]]:
    """Load a VOC-style dataset.

    Class names are mapped to contiguous ids 1..C in sorted name order (which
    reproduces the canonical VOC indices when all twenty classes are present).
    When an object PNG exists, instance indices 1..K are assigned to XML
    objects in file order; the void index 255 is excluded from every mask.

    Returns:
        (images, name -> class id mapping, class names indexed 1..C)
    """
    xml_dir = Path(xml_dir)
    image_dir = Path(image_dir)
    xml_paths = sorted(xml_dir.glob("*.xml"))
    if not xml_paths:
        raise ParseError(f"no XML annotation files found in {xml_dir}")

    parsed = [(p, *_parse_xml(p)) for p in xml_paths]
    names = sorted({name for _, _, objs in parsed for name, _ in objs})
    name_to_id = {name: i for i, name in enumerate(names, start=1)}

    images: list[AnnotatedImage] = []
    for xml_path, filename, objs in parsed:
        stem = xml_path.stem
        pixels = load_rgb(image_dir / filename)
        objects = [
            ObjectAnnotation(class_id=name_to_id[name], box=box) for name, box in objs
        ]

        if seg_object_dir is not None:
            png_path = Path(seg_object_dir) / f"{stem}.png"
            if png_path.exists():
                obj_map = load_indexed_png(png_path)
                indices = sorted(int(v) for v in np.unique(obj_map) if v not in (0, VOID_INDEX))
                if len(indices) != len(objects):
                    raise IntegrityError(
                        f"{png_path}: {len(indices)} instance indices for "
                        f"{len(objects)} XML objects in {xml_path}"
                    )
                for obj, idx in zip(objects, indices):
                    obj.mask = obj_map == idx

        semantic = None
        if seg_class_dir is not None:
            png_path = Path(seg_class_dir) / f"{stem}.png"
            if png_path.exists():
                semantic = load_indexed_png(png_path).copy()
                semantic[semantic == VOID_INDEX] = 0
                too_big = int(semantic.max(initial=0))
                if too_big > len(names):
                    raise IntegrityError(
                        f"{png_path}: semantic label {too_big} exceeds class count "
                        f"{len(names)}"
                    )

        images.append(
            normalize_annotations(
                AnnotatedImage(
                    image_id=stem,
                    pixels=pixels,
                    objects=objects,
                    semantic_map=semantic,
                    source=str(image_dir / filename),
                )
            )
        )
    return images, name_to_id, names
