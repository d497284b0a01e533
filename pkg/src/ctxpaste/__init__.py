"""Context-driven copy-paste data augmentation engine."""

from .geometry import Box, ShapeParams, box_from_shape, coverage, iou, shape_params
from .pipeline import AugmentConfig, augment_dataset, export_context_set, preview, stats

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "Box",
    "ShapeParams",
    "augment_dataset",
    "box_from_shape",
    "coverage",
    "export_context_set",
    "iou",
    "preview",
    "shape_params",
    "stats",
]
