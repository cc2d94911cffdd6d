"""Single-cell extraction that runs unchanged on full-field smears and on
pre-masked images with a black surround."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .raster import ColorSpace, RasterImage, SegmentationFailure

log = logging.getLogger(__name__)

MIN_SIDE = 16


@dataclass(frozen=True)
class SegmentationResult:
    mask: RasterImage
    cell_pixel_count: int
    center_distance: float
    intermediate_trace: list[tuple[str, RasterImage]] | None = None


@dataclass(frozen=True)
class SegmentationParams:
    max_window: int = 5
    p_low: float = 2.0
    p_high: float = 98.0
    delta: float = 0.01
    connectivity: int = 8


def segment_cell(
    img: RasterImage, trace: bool = False, params: SegmentationParams | None = None
) -> SegmentationResult:
    """Isolate the cell nearest the image centre.

    Chain: black->yellow, CMYK, Y plane, 5x5 local max, contrast stretch and
    histogram equalisation of the filtered plane, ``2*s + e``, keep pixels
    below ``min + delta``, then the connected component closest to centre.
    """
    params = params or SegmentationParams()
    if img.colorspace is not ColorSpace.RGB:
        raise raster.ColorSpaceError(f"expected RGB image, got {img.colorspace.value}")
    if min(img.shape) < MIN_SIDE:
        raise ValueError(f"image {img.shape} is smaller than {MIN_SIDE} px on a side")

    stages: list[tuple[str, RasterImage]] = []
    keep = stages.append if trace else (lambda _s: None)

    d = raster.black_to_yellow(img)
    keep(("yellow_remap", d))
    cmyk = raster.rgb_to_cmyk(d)
    y = RasterImage.gray(cmyk.plane(2))
    keep(("y_plane", y))
    f = raster.local_max_filter(y, params.max_window)
    keep(("local_max", f))
    s = raster.contrast_stretch(f, params.p_low, params.p_high)
    keep(("stretched", s))
    e = raster.equalize_histogram(f)
    keep(("equalized", e))
    j = raster.combine_stretch_equalize(s, e)
    keep(("combined", j))
    u = raster.threshold_below(j, params.delta)
    keep(("threshold", u))

    regions = raster.connected_components(u, params.connectivity)
    if regions.region_count == 0:
        raise SegmentationFailure("no-object: threshold left no foreground")
    center = raster.image_center(img)
    mask = raster.select_center_object(regions, center)
    keep(("mask", mask))

    label = int(regions.label_grid[mask.data > 0][0])
    cr, cc = regions.centroids[label - 1]
    return SegmentationResult(
        mask=mask,
        cell_pixel_count=int(mask.data.sum()),
        center_distance=float(np.hypot(cr - center[0], cc - center[1])),
        intermediate_trace=stages if trace else None,
    )


@dataclass
class BatchOutcome:
    results: list[tuple[str, SegmentationResult]] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)


def segment_batch(manifest, params: SegmentationParams | None = None, workers: int = 1) -> BatchOutcome:
    """Segment every manifest entry; per-entry errors are logged, not raised.

    Results keep manifest order regardless of ``workers``.
    """
    from .dataset import load_image

    def run(entry):
        try:
            return segment_cell(load_image(entry.resolve(manifest.root)), params=params), None
        except Exception as exc:  # noqa: BLE001 - any per-file problem is recorded
            return None, f"{type(exc).__name__}: {exc}"

    entries = list(manifest.entries)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(run, entries))
    else:
        outcomes = [run(e) for e in entries]

    batch = BatchOutcome()
    for entry, (res, err) in zip(entries, outcomes):
        if err is None:
            batch.results.append((entry.path, res))
        else:
            log.warning("segmentation failed for %s: %s", entry.path, err)
            batch.failures.append((entry.path, err))
    return batch
