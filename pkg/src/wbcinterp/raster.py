"""Image carriers and the pixel operators the segmentation chain is built from.

Images are stored as ``(H, W, C)`` float64 arrays on a 0-255 working scale and
tagged with a colour space.  Every operator returns a new image; inputs are
never modified.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class ColorSpace(str, enum.Enum):
    RGB = "RGB"
    CMYK = "CMYK"
    GRAY = "GRAY"
    BINARY = "BINARY"


_PLANES = {ColorSpace.RGB: 3, ColorSpace.CMYK: 4, ColorSpace.GRAY: 1, ColorSpace.BINARY: 1}


class ColorSpaceError(ValueError):
    """Raised when an operator receives an image in the wrong colour space."""


class RasterImage:
    """Multi-plane pixel grid with an explicit colour-space tag.

    ``planes`` has shape ``(height, width, n_planes)``.  The array is copied
    and frozen on construction so images can be shared freely.
    """

    __slots__ = ("planes", "colorspace")

    def __init__(self, planes, colorspace: ColorSpace | str):
        colorspace = ColorSpace(colorspace)
        arr = np.array(planes, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected (H, W) or (H, W, C) array, got shape {arr.shape}")
        if arr.shape[2] != _PLANES[colorspace]:
            raise ColorSpaceError(
                f"{colorspace.value} needs {_PLANES[colorspace]} planes, got {arr.shape[2]}"
            )
        if colorspace is ColorSpace.BINARY and not np.isin(arr, (0.0, 1.0)).all():
            raise ValueError("BINARY image may only hold 0 and 1")
        arr.flags.writeable = False
        self.planes = arr
        self.colorspace = colorspace

    @property
    def height(self) -> int:
        return self.planes.shape[0]

    @property
    def width(self) -> int:
        return self.planes.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[:2]

    def plane(self, i: int = 0) -> np.ndarray:
        """Return plane ``i`` as a read-only 2-D view."""
        return self.planes[:, :, i]

    @property
    def data(self) -> np.ndarray:
        """2-D view for single-plane images."""
        if self.planes.shape[2] != 1:
            raise ColorSpaceError(f"{self.colorspace.value} image has no single plane")
        return self.planes[:, :, 0]

    @classmethod
    def gray(cls, arr) -> "RasterImage":
        return cls(arr, ColorSpace.GRAY)

    @classmethod
    def binary(cls, arr) -> "RasterImage":
        return cls(np.asarray(arr).astype(bool).astype(np.float64), ColorSpace.BINARY)

    @classmethod
    def rgb(cls, arr) -> "RasterImage":
        return cls(arr, ColorSpace.RGB)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.colorspace is other.colorspace and np.array_equal(self.planes, other.planes)

    def __repr__(self):
        return f"RasterImage({self.colorspace.value}, {self.height}x{self.width})"


@dataclass(frozen=True)
class LabeledRegions:
    label_grid: np.ndarray
    region_count: int
    centroids: list[tuple[float, float]] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)


def _require(img: RasterImage, *spaces: ColorSpace) -> None:
    if img.colorspace not in spaces:
        names = "/".join(s.value for s in spaces)
        raise ColorSpaceError(f"expected {names} image, got {img.colorspace.value}")


def split_channels(img: RasterImage) -> tuple[RasterImage, RasterImage, RasterImage]:
    _require(img, ColorSpace.RGB)
    return tuple(RasterImage.gray(img.plane(i)) for i in range(3))


def merge_channels(r: RasterImage, g: RasterImage, b: RasterImage) -> RasterImage:
    return RasterImage.rgb(np.stack([r.data, g.data, b.data], axis=-1))


def black_to_yellow(img: RasterImage) -> RasterImage:
    """Repaint pixels that are exactly (0, 0, 0) as (255, 255, 0)."""
    _require(img, ColorSpace.RGB)
    out = img.planes.copy()
    black = (out == 0).all(axis=-1)
    out[black] = (255.0, 255.0, 0.0)
    return RasterImage.rgb(out)


def rgb_to_cmyk(img: RasterImage) -> RasterImage:
    """Naive RGB to CMYK conversion with every plane on the 0-255 scale.

    Pure black (K = 1) maps to C = M = Y = 0.
    """
    _require(img, ColorSpace.RGB)
    rgb = img.planes / 255.0
    k = 1.0 - rgb.max(axis=-1)
    denom = 1.0 - k
    cmy = np.zeros_like(rgb)
    ok = denom > 0
    cmy[ok] = (1.0 - rgb[ok] - k[ok, None]) / denom[ok, None]
    cmyk = np.concatenate([cmy, k[..., None]], axis=-1) * 255.0
    return RasterImage(np.clip(cmyk, 0.0, 255.0), ColorSpace.CMYK)


def cmyk_to_rgb(img: RasterImage) -> RasterImage:
    _require(img, ColorSpace.CMYK)
    c = img.planes / 255.0
    rgb = 255.0 * (1.0 - c[..., :3]) * (1.0 - c[..., 3:4])
    return RasterImage.rgb(rgb)


def local_max_filter(img: RasterImage, window: int = 5) -> RasterImage:
    """Sliding-window maximum with edge replication at the borders."""
    _require(img, ColorSpace.GRAY)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    return RasterImage.gray(ndimage.maximum_filter(img.data, size=window, mode="nearest"))


def contrast_stretch(img: RasterImage, p_low: float = 2.0, p_high: float = 98.0) -> RasterImage:
    """Linear stretch mapping the ``p_low``..``p_high`` percentile band onto 0-255.

    Percentiles use linear interpolation between order statistics.  A flat
    band (both percentiles equal) yields an all-zero image.
    """
    _require(img, ColorSpace.GRAY)
    if not p_low < p_high:
        raise ValueError("p_low must be below p_high")
    x = img.data
    if x.size == 0:
        raise ValueError("cannot stretch an empty image")
    lo, hi = np.percentile(x, [p_low, p_high])
    if hi == lo:
        return RasterImage.gray(np.zeros_like(x))
    return RasterImage.gray(np.clip((x - lo) * 255.0 / (hi - lo), 0.0, 255.0))


def equalize_histogram(img: RasterImage) -> RasterImage:
    """256-bin histogram equalisation: each pixel becomes ``255 * CDF(bin)``.

    Real-valued intensities are binned by ``floor`` after clipping to 0-255.
    """
    _require(img, ColorSpace.GRAY)
    x = img.data
    bins = np.clip(np.floor(x), 0, 255).astype(np.intp)
    counts = np.bincount(bins.ravel(), minlength=256)
    cdf = np.cumsum(counts) / bins.size
    return RasterImage.gray(255.0 * cdf[bins])


def combine_stretch_equalize(s: RasterImage, e: RasterImage) -> RasterImage:
    """Pixelwise ``2*s + e``; the result spans 0-765 and is not clipped."""
    _require(s, ColorSpace.GRAY)
    _require(e, ColorSpace.GRAY)
    if s.shape != e.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {e.shape}")
    return RasterImage.gray(2.0 * s.data + e.data)


def threshold_below(img: RasterImage, delta: float = 0.01) -> RasterImage:
    """Mark pixels strictly below ``min(img) + delta``."""
    _require(img, ColorSpace.GRAY)
    x = img.data
    return RasterImage.binary(x < x.min() + delta)


def connected_components(mask: RasterImage, connectivity: int = 8) -> LabeledRegions:
    _require(mask, ColorSpace.BINARY)
    if connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    elif connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(mask.data > 0, structure=structure)
    if n == 0:
        return LabeledRegions(labels, 0, [], [])
    idx = np.arange(1, n + 1)
    centroids = [tuple(map(float, c)) for c in ndimage.center_of_mass(np.ones_like(labels), labels, idx)]
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:].tolist()
    return LabeledRegions(labels, n, centroids, sizes)


class SegmentationFailure(RuntimeError):
    """No object could be isolated."""


def select_center_object(regions: LabeledRegions, center: tuple[float, float]) -> RasterImage:
    """Keep the region whose centroid is nearest ``center`` (row, col).

    Ties go to the lowest label.
    """
    if regions.region_count == 0:
        raise SegmentationFailure("no-object: nothing to select")
    d = [np.hypot(r - center[0], c - center[1]) for r, c in regions.centroids]
    best = int(np.argmin(d)) + 1
    return RasterImage.binary(regions.label_grid == best)


def image_center(img: RasterImage) -> tuple[float, float]:
    """Centre as (row, col) = (height/2, width/2) in pixel-centre coordinates."""
    return ((img.height - 1) / 2.0, (img.width - 1) / 2.0)


def rgb_to_gray(img: RasterImage) -> RasterImage:
    _require(img, ColorSpace.RGB)
    y = img.planes @ np.array([0.299, 0.587, 0.114])
    # round-half-up keeps 0.5 ties stable across platforms
    return RasterImage.gray(np.clip(np.floor(y + 0.5), 0, 255))


def dilate(mask: RasterImage) -> RasterImage:
    """Binary dilation with a 3x3 square."""
    _require(mask, ColorSpace.BINARY)
    out = ndimage.binary_dilation(mask.data > 0, structure=np.ones((3, 3), dtype=bool))
    return RasterImage.binary(out)
