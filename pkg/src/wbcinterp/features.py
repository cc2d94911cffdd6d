"""The 24-slot feature vector: names, categories and one-call extraction."""
from __future__ import annotations

import numpy as np

from .color import extract_color_features
from .raster import RasterImage
from .shape import HarrisConfig, extract_shape_features
from .texture import extract_texture_features

FEATURE_NAMES = (
    "White EI",
    "Black EI",
    "SP value",
    "1st Eigenvalue",
    "2nd Eigenvalue",
    "Eccentricity",
    "Circularity",
    "Number of Corners",
    "Mean R",
    "SD R",
    "Mean G",
    "SD G",
    "Mean B",
    "SD B",
    "Mean C",
    "SD C",
    "Mean M",
    "SD M",
    "Mean Y",
    "SD Y",
    "Mean K",
    "SD K",
    "Mean P",
    "SD P",
)
N_FEATURES = len(FEATURE_NAMES)

CATEGORIES = ("Shape", "Color", "Texture")
CATEGORY_OF = ("Shape",) * 8 + ("Color",) * 14 + ("Texture",) * 2


def extract_features(img: RasterImage, mask: RasterImage, harris: HarrisConfig = HarrisConfig()) -> np.ndarray:
    """All 24 features of one segmented cell, in table order.

    Eccentricity is NaN for masks whose second eigenvalue is zero.
    """
    vals = (
        extract_shape_features(mask, harris).values()
        + extract_color_features(img, mask).values()
        + extract_texture_features(img, mask).values()
    )
    return np.asarray(vals, dtype=np.float64)
