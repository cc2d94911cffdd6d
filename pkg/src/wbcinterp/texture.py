"""Co-occurrence texture statistics of the masked grey image (slots 23-24)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster
from .raster import ColorSpace, RasterImage

LEVELS = 256
DEFAULT_SHIFTS = ((0, 1), (1, 0))


@dataclass(frozen=True)
class CooccurrenceMatrix:
    counts: np.ndarray
    shift_spec: tuple[tuple[int, int], ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _pairs(p: np.ndarray, dr: int, dc: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = p.shape
    if dr < 0 or dc < 0:
        raise ValueError("shifts must be non-negative")
    return p[: h - dr, : w - dc], p[dr:, dc:]


def cooccurrence(
    gray: RasterImage,
    mask: RasterImage | None = None,
    shifts=DEFAULT_SHIFTS,
    symmetric: bool = False,
) -> CooccurrenceMatrix:
    """256x256 counts of (pixel, neighbour) intensity pairs.

    The grey image is multiplied by the mask first, so background pixels take
    part as zeros.  Each shift ``(dr, dc)`` adds the pairs ``p[i, j]`` and
    ``p[i + dr, j + dc]`` for every in-bounds position.
    """
    if gray.colorspace is not ColorSpace.GRAY:
        raise raster.ColorSpaceError("co-occurrence needs a GRAY image")
    p = gray.data
    if mask is not None:
        if mask.shape != gray.shape:
            raise ValueError("mask and image differ in size")
        p = p * mask.data
    if not np.array_equal(p, np.round(p)) or p.min() < 0 or p.max() > LEVELS - 1:
        raise ValueError("grey levels must be integers in 0..255")
    p = p.astype(np.intp)
    counts = np.zeros(LEVELS * LEVELS, dtype=np.int64)
    for dr, dc in shifts:
        a, b = _pairs(p, dr, dc)
        counts += np.bincount((a * LEVELS + b).ravel(), minlength=LEVELS * LEVELS)
    counts = counts.reshape(LEVELS, LEVELS)
    if symmetric:
        counts = counts + counts.T
    return CooccurrenceMatrix(counts, tuple(tuple(s) for s in shifts))


def texture_stats(P: CooccurrenceMatrix) -> tuple[float, float]:
    """Mean and population SD over all 65,536 raw counts."""
    c = P.counts.astype(np.float64)
    return float(c.mean()), float(c.std())


@dataclass(frozen=True)
class TextureFeatures:
    mean_p: float
    sd_p: float

    def values(self) -> list[float]:
        return [self.mean_p, self.sd_p]


def extract_texture_features(img: RasterImage, mask: RasterImage) -> TextureFeatures:
    P = cooccurrence(raster.rgb_to_gray(img), mask)
    return TextureFeatures(*texture_stats(P))
