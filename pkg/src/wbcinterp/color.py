"""Masked colour statistics over R, G, B, C, M, Y, K (feature slots 9-22)."""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from . import raster
from .raster import ColorSpace, RasterImage

CHANNELS = ("r", "g", "b", "c", "m", "y", "k")


def masked_stats(channel: RasterImage, mask: RasterImage, ddof: int = 0) -> tuple[float, float]:
    """Mean and SD of ``channel`` over pixels where ``mask`` is 1.

    ``ddof=0`` gives the population SD; pass 1 for the sample SD.
    """
    if mask.colorspace is not ColorSpace.BINARY:
        raise raster.ColorSpaceError("mask must be BINARY")
    if channel.shape != mask.shape:
        raise ValueError(f"dimension mismatch: {channel.shape} vs {mask.shape}")
    vals = channel.data[mask.data > 0]
    if vals.size == 0:
        raise ValueError("mask selects no pixels")
    if vals.size <= ddof:
        raise ValueError(f"need more than {ddof} pixels for ddof={ddof}")
    return float(vals.mean()), float(vals.std(ddof=ddof))


@dataclass(frozen=True)
class ColorFeatures:
    mean_r: float
    sd_r: float
    mean_g: float
    sd_g: float
    mean_b: float
    sd_b: float
    mean_c: float
    sd_c: float
    mean_m: float
    sd_m: float
    mean_y: float
    sd_y: float
    mean_k: float
    sd_k: float

    def values(self) -> list[float]:
        return list(astuple(self))


def extract_color_features(img: RasterImage, mask: RasterImage, ddof: int = 0) -> ColorFeatures:
    """RGB statistics come from the raw image; CMYK statistics from the
    black->yellow remapped copy, the same image the segmenter converts."""
    planes = list(raster.split_channels(img))
    cmyk = raster.rgb_to_cmyk(raster.black_to_yellow(img))
    planes += [RasterImage.gray(cmyk.plane(i)) for i in range(4)]
    stats: list[float] = []
    for p in planes:
        stats.extend(masked_stats(p, mask, ddof))
    return ColorFeatures(*stats)
