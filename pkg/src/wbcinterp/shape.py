"""Shape descriptors of a binary cell mask (feature slots 1-8)."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import raster
from .raster import ColorSpace, RasterImage

_EPS = 1e-9


class DegenerateShapeError(ValueError):
    pass


def _coords(mask: RasterImage) -> np.ndarray:
    if mask.colorspace is not ColorSpace.BINARY:
        raise raster.ColorSpaceError("shape features need a BINARY mask")
    pts = np.argwhere(mask.data > 0).astype(np.float64)
    if len(pts) == 0:
        raise ValueError("mask has no foreground pixels")
    return pts


# -- minimum enclosing circle (randomised incremental / Welzl) --------------

def _circle_two(a, b):
    cy, cx = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    return (cy, cx, max(math.hypot(cy - a[0], cx - a[1]), math.hypot(cy - b[0], cx - b[1])))


def _circle_three(a, b, c):
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return (x, y, r)


def _inside(c, p) -> bool:
    return c is not None and math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1 + _EPS) + _EPS


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _with_two(pts, p, q):
    circ = _circle_two(p, q)
    left = right = None
    for r in pts:
        if _inside(circ, r):
            continue
        cr = _cross(p, q, r)
        c = _circle_three(p, q, r)
        if c is None:
            continue
        if cr > 0 and (left is None or _cross(p, q, c) > _cross(p, q, left)):
            left = c
        elif cr < 0 and (right is None or _cross(p, q, c) < _cross(p, q, right)):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _with_one(pts, p):
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(pts):
        if not _inside(c, q):
            c = _circle_two(p, q) if c[2] == 0.0 else _with_two(pts[: i + 1], p, q)
    return c


def smallest_circle(points, seed: int = 0) -> tuple[float, float, float]:
    """Smallest circle ``(row, col, radius)`` enclosing ``points``; expected O(n)."""
    pts = [(float(a), float(b)) for a, b in points]
    if not pts:
        raise ValueError("no points")
    random.Random(seed).shuffle(pts)
    c = None
    for i, p in enumerate(pts):
        if c is None or not _inside(c, p):
            c = _with_one(pts[: i + 1], p)
    return c


def min_enclosing_circle(mask: RasterImage) -> tuple[tuple[float, float], float]:
    """Smallest circle around all foreground pixel centres.

    Only boundary pixels can touch the circle, so interior pixels are dropped
    before running the solver.
    """
    _coords(mask)
    fg = mask.data > 0
    edge = fg & ~ndimage.binary_erosion(fg, border_value=0)
    pts = np.argwhere(edge)
    r, c, rad = smallest_circle(pts.tolist())
    return (r, c), rad


# -- SPEI frame -------------------------------------------------------------

@dataclass(frozen=True)
class SpeiFrame:
    circle_center: tuple[float, float]
    circle_radius: float
    square_side: float
    white_count: int
    black_count: int


def _centres_in(lo: float, hi: float) -> tuple[int, int]:
    return math.ceil(lo - _EPS), math.floor(hi + _EPS)


def spei(mask: RasterImage) -> SpeiFrame:
    """Enclose the shape in its minimal circle, then the circle in an
    axis-aligned square, and count foreground/background pixels of the square.

    A pixel belongs to the square when its centre lies inside.  The square is
    not clipped to the image: pixels outside the frame count as background.
    """
    (cr, cc), rad = min_enclosing_circle(mask)
    r0, r1 = _centres_in(cr - rad, cr + rad)
    c0, c1 = _centres_in(cc - rad, cc + rad)
    total = (r1 - r0 + 1) * (c1 - c0 + 1)
    h, w = mask.shape
    window = mask.data[max(r0, 0): min(r1, h - 1) + 1, max(c0, 0): min(c1, w - 1) + 1]
    white = int(window.sum())
    return SpeiFrame((cr, cc), rad, 2.0 * rad, white, total - white)


def sp_value(white: int, black: int) -> float:
    if white + black <= 0:
        raise ValueError("SP undefined for an empty frame")
    return white / (white + black)


# -- moments ----------------------------------------------------------------

def shape_eigenvalues(mask: RasterImage) -> tuple[float, float]:
    """Eigenvalues (descending) of the population covariance of foreground
    (row, col) coordinates."""
    pts = _coords(mask)
    cov = np.cov(pts, rowvar=False, bias=True) if len(pts) > 1 else np.zeros((2, 2))
    ev = np.linalg.eigvalsh(cov)
    ev = np.clip(ev, 0.0, None)
    return float(ev[1]), float(ev[0])


def eccentricity(eig1: float, eig2: float) -> float:
    if eig2 <= 0:
        raise DegenerateShapeError("second eigenvalue is zero; eccentricity undefined")
    return eig1 / eig2


def circularity(mask: RasterImage, standard: bool = False) -> float:
    """Area over ``4*pi*perimeter`` where perimeter is the ring a 3x3 dilation adds.

    With ``standard=True`` returns the conventional ``4*pi*A / P**2`` instead.
    """
    area = float(_coords(mask).shape[0])
    perim = float(raster.dilate(mask).data.sum()) - area
    if perim <= 0:
        raise DegenerateShapeError("mask fills the image; perimeter is empty")
    if standard:
        return 4.0 * math.pi * area / perim**2
    return area / (4.0 * math.pi * perim)


# -- corners ----------------------------------------------------------------

@dataclass(frozen=True)
class HarrisConfig:
    k: float = 0.05
    sigma: float = 2.0
    response_threshold: float = 0.01
    nms_window: int = 5
    # floor on the response, in units of an ideal right-angle corner of a
    # binary mask (see harris_response); keeps smooth outlines at zero corners
    min_response: float = 0.25

    def __post_init__(self):
        if self.k <= 0 or self.sigma <= 0:
            raise ValueError("k and sigma must be positive")
        if self.nms_window < 1 or self.nms_window % 2 == 0:
            raise ValueError("nms_window must be a positive odd integer")


def harris_response(mask: RasterImage, cfg: HarrisConfig = HarrisConfig()) -> np.ndarray:
    """Harris cornerness ``det(A) - k*trace(A)**2`` of the mask.

    Gradients are Sobel derivatives; the structure-tensor entries are smoothed
    with a Gaussian of SD ``cfg.sigma``.  The map is divided by the peak
    response of an isolated right-angle corner so thresholds are scale-free.
    """
    u = mask.data.astype(np.float64)
    return _raw_response(u, cfg) / _unit_corner(cfg)


def _raw_response(u: np.ndarray, cfg: HarrisConfig) -> np.ndarray:
    pad = int(math.ceil(4 * cfg.sigma)) + 2
    u = np.pad(u, pad)
    gy = ndimage.sobel(u, axis=0, mode="constant")
    gx = ndimage.sobel(u, axis=1, mode="constant")
    sxx = ndimage.gaussian_filter(gx * gx, cfg.sigma, mode="constant")
    syy = ndimage.gaussian_filter(gy * gy, cfg.sigma, mode="constant")
    sxy = ndimage.gaussian_filter(gx * gy, cfg.sigma, mode="constant")
    r = sxx * syy - sxy * sxy - cfg.k * (sxx + syy) ** 2
    return r[pad:-pad, pad:-pad]


_UNIT_CACHE: dict[tuple[float, float], float] = {}


def _unit_corner(cfg: HarrisConfig) -> float:
    key = (cfg.k, cfg.sigma)
    if key not in _UNIT_CACHE:
        n = int(8 * cfg.sigma) + 8
        block = np.zeros((2 * n, 2 * n))
        block[n:, n:] = 1.0
        _UNIT_CACHE[key] = float(_raw_response(block, cfg).max())
    return _UNIT_CACHE[key]


def count_corners(mask: RasterImage, cfg: HarrisConfig = HarrisConfig()) -> int:
    _coords(mask)
    r = harris_response(mask, cfg)
    peak = r.max()
    if peak <= 0:
        return 0
    thresh = max(cfg.response_threshold * peak, cfg.min_response)
    local = ndimage.maximum_filter(r, size=cfg.nms_window, mode="constant", cval=-np.inf)
    peaks = (r >= thresh) & (r == local)
    # plateaus of equal maxima count once
    _, n = ndimage.label(peaks, structure=np.ones((3, 3), dtype=bool))
    return int(n)


# -- record -----------------------------------------------------------------

@dataclass(frozen=True)
class ShapeFeatures:
    white_ei: int
    black_ei: int
    sp: float
    eig1: float
    eig2: float
    eccentricity: float  # NaN when eig2 == 0
    circularity: float
    corner_count: int

    def values(self) -> list[float]:
        return [float(self.white_ei), float(self.black_ei), self.sp, self.eig1, self.eig2,
                self.eccentricity, self.circularity, float(self.corner_count)]


def extract_shape_features(
    mask: RasterImage, cfg: HarrisConfig = HarrisConfig(), standard_circularity: bool = False
) -> ShapeFeatures:
    frame = spei(mask)
    e1, e2 = shape_eigenvalues(mask)
    ecc = e1 / e2 if e2 > 0 else math.nan
    return ShapeFeatures(
        white_ei=frame.white_count,
        black_ei=frame.black_count,
        sp=sp_value(frame.white_count, frame.black_count),
        eig1=e1,
        eig2=e2,
        eccentricity=ecc,
        circularity=circularity(mask, standard=standard_circularity),
        corner_count=count_corners(mask, cfg),
    )
