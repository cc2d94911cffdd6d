"""Interpretable white-blood-cell classification: segmentation, 24 shape,
colour and texture features, and a random forest with permutation importance."""
from .evaluation import ConfusionMatrix, EvaluationReport, accuracy_with_ci, f1_score
from .features import CATEGORY_OF, FEATURE_NAMES, extract_features
from .forest import RandomForestModel, cross_validate, permutation_importance, stratified_split, train_forest
from .raster import ColorSpace, RasterImage, SegmentationFailure
from .segmentation import SegmentationResult, segment_cell

__version__ = "0.1.0"

__all__ = [
    "CATEGORY_OF",
    "ColorSpace",
    "ConfusionMatrix",
    "EvaluationReport",
    "FEATURE_NAMES",
    "RandomForestModel",
    "RasterImage",
    "SegmentationFailure",
    "SegmentationResult",
    "accuracy_with_ci",
    "cross_validate",
    "extract_features",
    "f1_score",
    "permutation_importance",
    "segment_cell",
    "stratified_split",
    "train_forest",
]
