"""Dataset parsing and serialization (COCO JSON, VOC XML + indexed PNG, RLE codecs)."""

from .coco import load_coco, load_rgb, rasterize_polygons
from .rle import RleMask, counts_to_string, decode_rle, encode_rle, rle_from_string, string_to_counts
from .types import (
    AnnotatedImage,
    ObjectAnnotation,
    dataset_fingerprint,
    normalize_annotations,
    tight_box,
)
from .voc import load_voc
from .writer import write_dataset

__all__ = [
    "AnnotatedImage",
    "ObjectAnnotation",
    "RleMask",
    "counts_to_string",
    "dataset_fingerprint",
    "decode_rle",
    "encode_rle",
    "load_coco",
    "load_rgb",
    "load_voc",
    "normalize_annotations",
    "rasterize_polygons",
    "rle_from_string",
    "string_to_counts",
    "tight_box",
    "write_dataset",
]
