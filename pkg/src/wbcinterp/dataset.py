"""Image ingestion, manifests, feature-matrix files and synthetic phantoms."""
from __future__ import annotations

import configparser
import csv
import enum
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .features import FEATURE_NAMES, extract_features
from .raster import RasterImage
from .segmentation import SegmentationParams, segment_cell
from .shape import HarrisConfig

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".png"}


class Label(str, enum.Enum):
    HEALTHY = "Healthy"
    MALIGNANT = "Malignant"

    @property
    def code(self) -> int:
        return 1 if self is Label.MALIGNANT else 0

    @classmethod
    def from_code(cls, code: int) -> "Label":
        return cls.MALIGNANT if code else cls.HEALTHY


class Source(str, enum.Enum):
    ALL_IDB2 = "ALL_IDB2"
    C_NMC = "C_NMC"
    PHANTOM = "PHANTOM"
    OTHER = "OTHER"


class ImageDecodeError(IOError):
    pass


class SchemaError(ValueError):
    pass


def load_image(path) -> RasterImage:
    """Decode BMP/TIFF/JPEG/PNG into an 8-bit RGB raster.

    Grey or palette images are promoted to RGB; alpha is dropped.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    return RasterImage.rgb(arr)


def save_rgb(img: RasterImage, path) -> None:
    Image.fromarray(np.clip(np.rint(img.planes), 0, 255).astype(np.uint8), "RGB").save(path)


def save_mask(mask: RasterImage, path) -> None:
    Image.fromarray((mask.data > 0).astype(np.uint8) * 255, "L").save(path)


def load_mask(path) -> RasterImage:
    with Image.open(path) as im:
        return RasterImage.binary(np.asarray(im.convert("L")) > 127)


def save_gray(img: RasterImage, path) -> None:
    """Write a single-plane image rescaled to 0-255 for viewing."""
    x = img.data
    lo, hi = float(x.min()), float(x.max())
    y = np.zeros_like(x) if hi == lo else (x - lo) * (255.0 / (hi - lo))
    Image.fromarray(np.rint(y).astype(np.uint8), "L").save(path)


# -- manifests ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: Label
    source: Source = Source.OTHER

    def resolve(self, root) -> Path:
        p = Path(self.path)
        return p if p.is_absolute() or root is None else Path(root) / p


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path | None = None
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise SchemaError("manifest paths must be unique")

    def __len__(self):
        return len(self.entries)

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("path", "label", "source"))
            for e in self.entries:
                w.writerow((e.path, e.label.value, e.source.value))

    @classmethod
    def load(cls, path, root=None) -> "DatasetManifest":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["path", "label", "source"]:
            raise SchemaError(f"{path}: header must be path,label,source")
        entries = [ManifestEntry(r[0], Label(r[1]), Source(r[2])) for r in rows[1:] if r]
        return cls(entries, Path(root) if root else path.parent)


_ALLIDB_RE = re.compile(r"_([01])$")
_FOLDER_LABELS = {
    "all": Label.MALIGNANT,
    "malignant": Label.MALIGNANT,
    "hem": Label.HEALTHY,
    "healthy": Label.HEALTHY,
}


def label_allidb2(rel: Path) -> Label | None:
    """``ImXXX_1`` is a blast (malignant), ``ImXXX_0`` a healthy cell."""
    m = _ALLIDB_RE.search(rel.stem)
    if m is None:
        return None
    return Label.MALIGNANT if m.group(1) == "1" else Label.HEALTHY


def label_folders(rel: Path) -> Label | None:
    """Nearest parent folder named ``all``/``malignant`` or ``hem``/``healthy``."""
    for part in reversed(rel.parts[:-1]):
        lab = _FOLDER_LABELS.get(part.lower())
        if lab is not None:
            return lab
    return None


LAYOUT_RULES = {
    "allidb2": (label_allidb2, Source.ALL_IDB2),
    "cnmc": (label_folders, Source.C_NMC),
    "folders": (label_folders, Source.OTHER),
}


def build_manifest(root, layout_rule: str = "allidb2") -> DatasetManifest:
    """Walk ``root`` for images and label them by ``layout_rule``.

    Entries are sorted by relative path.  Images the rule cannot label are
    listed in ``manifest.skipped``.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    try:
        rule, source = LAYOUT_RULES[layout_rule]
    except KeyError:
        raise ValueError(f"unknown layout rule {layout_rule!r}; choose from {sorted(LAYOUT_RULES)}") from None
    entries, skipped = [], []
    for p in sorted(root.rglob("*"), key=lambda q: q.relative_to(root).as_posix()):
        if not p.is_file() or p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        rel = p.relative_to(root)
        lab = rule(rel)
        if lab is None:
            skipped.append(rel.as_posix())
        else:
            entries.append(ManifestEntry(rel.as_posix(), lab, source))
    if not entries:
        log.warning("no labelled images found under %s", root)
    if skipped:
        log.warning("%d unlabelled files skipped under %s", len(skipped), root)
    return DatasetManifest(entries, root, skipped)


# -- feature matrix -----------------------------------------------------------

MATRIX_HEADER = ("source_id", *FEATURE_NAMES, "label")


@dataclass
class FeatureMatrix:
    source_ids: list[str] = field(default_factory=list)
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, len(FEATURE_NAMES))))
    labels: list[Label] = field(default_factory=list)
    column_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(FEATURE_NAMES))
        if tuple(self.column_names) != FEATURE_NAMES:
            raise SchemaError("column names must match the feature table exactly")
        if not len(self.source_ids) == len(self.labels) == len(self.values):
            raise SchemaError("source_ids, values and labels differ in length")

    def __len__(self):
        return len(self.source_ids)

    @property
    def y(self) -> np.ndarray:
        return np.array([lab.code for lab in self.labels], dtype=np.intp)

    def subset(self, idx) -> "FeatureMatrix":
        idx = list(idx)
        return FeatureMatrix([self.source_ids[i] for i in idx], self.values[idx], [self.labels[i] for i in idx])

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.source_ids == other.source_ids
            and self.labels == other.labels
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


def save_matrix(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MATRIX_HEADER)
        for sid, row, lab in zip(matrix.source_ids, matrix.values, matrix.labels):
            w.writerow([sid, *(repr(float(v)) for v in row), lab.value])


def load_matrix(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MATRIX_HEADER:
            raise SchemaError(f"{path}: header does not match the 24-feature schema")
        ids, vals, labs = [], [], []
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MATRIX_HEADER):
                raise SchemaError(f"{path}:{n}: expected {len(MATRIX_HEADER)} fields, got {len(row)}")
            ids.append(row[0])
            vals.append([float(v) for v in row[1:-1]])
            labs.append(Label(row[-1]))
    return FeatureMatrix(ids, np.asarray(vals).reshape(-1, len(FEATURE_NAMES)), labs)


@dataclass
class ExtractOutcome:
    matrix: FeatureMatrix
    failures: list[tuple[str, str]] = field(default_factory=list)


def extract_one(img: RasterImage, params=None, harris=HarrisConfig()) -> np.ndarray:
    mask = segment_cell(img, params=params).mask
    return extract_features(img, mask, harris)


def extract_all(
    manifest: DatasetManifest, params: SegmentationParams | None = None, harris: HarrisConfig = HarrisConfig()
) -> ExtractOutcome:
    """Segment and featurise every entry; failures and undefined values are
    logged and the entry left out."""
    ids, rows, labs, failures = [], [], [], []
    for e in manifest.entries:
        try:
            vec = extract_one(load_image(e.resolve(manifest.root)), params, harris)
        except Exception as exc:  # noqa: BLE001 - any per-file problem is recorded
            failures.append((e.path, f"{type(exc).__name__}: {exc}"))
            log.warning("skipping %s: %s", e.path, exc)
            continue
        if not np.isfinite(vec).all():
            bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(vec))]
            failures.append((e.path, f"undefined features: {', '.join(bad)}"))
            log.warning("skipping %s: undefined %s", e.path, bad)
            continue
        ids.append(e.path)
        rows.append(vec)
        labs.append(e.label)
    return ExtractOutcome(FeatureMatrix(ids, np.asarray(rows).reshape(-1, len(FEATURE_NAMES)), labs), failures)


# -- phantoms -----------------------------------------------------------------

@dataclass(frozen=True)
class CellRecipe:
    """Colour and geometry of one synthetic cell class."""

    color: tuple[float, float, float]
    radius: tuple[float, float]  # min, max
    wobble: float  # relative radial amplitude of boundary harmonics
    elongation: tuple[float, float]  # min, max axis ratio
    noise: float  # per-pixel brightness noise SD
    blotches: float  # amplitude of smooth low-frequency intensity patches


RECIPES = {
    "round-dark": CellRecipe((92, 48, 150), (66, 76), 0.0, (1.0, 1.12), 4.0, 0.0),
    "irregular-light": CellRecipe((150, 108, 205), (66, 76), 0.10, (1.1, 1.3), 14.0, 18.0),
    "round-light": CellRecipe((150, 108, 205), (66, 76), 0.0, (1.0, 1.12), 4.0, 0.0),
    "irregular-dark": CellRecipe((92, 48, 150), (66, 76), 0.10, (1.1, 1.3), 14.0, 18.0),
}

BACKGROUNDS = ("tissue", "plain", "black")


@dataclass(frozen=True)
class PhantomSpec:
    n_per_class: int = 40
    size: int = 240
    seed: int = 7
    healthy: str = "round-dark"
    malignant: str = "irregular-light"
    backgrounds: tuple[str, ...] = ("tissue", "black")

    def __post_init__(self):
        for name in (self.healthy, self.malignant):
            if name not in RECIPES:
                raise ValueError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}")
        for b in self.backgrounds:
            if b not in BACKGROUNDS:
                raise ValueError(f"unknown background {b!r}; choose from {BACKGROUNDS}")
        if self.size < 64:
            raise ValueError("phantom size must be at least 64 px")

    @classmethod
    def from_file(cls, path) -> "PhantomSpec":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_text(cls, text: str) -> "PhantomSpec":
        cp = configparser.ConfigParser()
        cp.read_string("[phantom]\n" + text)
        s = cp["phantom"]
        kw = {}
        for key in ("n_per_class", "size", "seed"):
            if key in s:
                kw[key] = s.getint(key)
        for key in ("healthy", "malignant"):
            if key in s:
                kw[key] = s[key].strip()
        if "backgrounds" in s:
            kw["backgrounds"] = tuple(b.strip() for b in s["backgrounds"].split(",") if b.strip())
        return cls(**kw)

    def to_text(self) -> str:
        return (
            f"n_per_class = {self.n_per_class}\nsize = {self.size}\nseed = {self.seed}\n"
            f"healthy = {self.healthy}\nmalignant = {self.malignant}\n"
            f"backgrounds = {','.join(self.backgrounds)}\n"
        )


def cell_shape(rng: np.random.Generator, recipe: CellRecipe, size: int, center=None) -> np.ndarray:
    """Boolean mask of one star-shaped cell outline."""
    r0 = rng.uniform(*recipe.radius)
    elong = rng.uniform(*recipe.elongation)
    tilt = rng.uniform(0, np.pi)
    harm = [(k, rng.uniform(-1, 1) * recipe.wobble / math.sqrt(k - 1), rng.uniform(0, 2 * np.pi)) for k in range(2, 7)]
    cy, cx = center if center is not None else ((size - 1) / 2.0 + rng.uniform(-3, 3), (size - 1) / 2.0 + rng.uniform(-3, 3))
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # rotate, then squash one axis to elongate while keeping the area near pi*r0^2
    u = dx * math.cos(tilt) + dy * math.sin(tilt)
    v = -dx * math.sin(tilt) + dy * math.cos(tilt)
    u, v = u / math.sqrt(elong), v * math.sqrt(elong)
    rho = np.hypot(u, v)
    theta = np.arctan2(v, u)
    bound = r0 * (1.0 + sum(a * np.cos(k * theta + ph) for k, a, ph in harm))
    return rho <= bound


def _background(rng, style: str, size: int) -> np.ndarray:
    if style == "black":
        return np.zeros((size, size, 3))
    base = np.array([242.0, 232.0, 214.0])
    img = np.broadcast_to(base, (size, size, 3)).copy()
    if style == "plain":
        return img
    img += rng.normal(0, 3.0, (size, size, 1))
    # a few red cells scattered around the margin
    yy, xx = np.mgrid[:size, :size]
    for _ in range(rng.integers(2, 5)):
        ang = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(0.42, 0.55) * size
        cy, cx = size / 2 + dist * math.sin(ang), size / 2 + dist * math.cos(ang)
        r = rng.uniform(0.08, 0.12) * size
        rbc = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        img[rbc] = (214.0, 140.0, 140.0)
    return img


def render_cell(rng, recipe: CellRecipe, mask: np.ndarray, img: np.ndarray) -> np.ndarray:
    """Paint the cell into ``img``; blue stays the dominant channel inside it."""
    size = mask.shape[0]
    shade = rng.normal(0, recipe.noise, (size, size, 1))
    if recipe.blotches:
        field_ = ndimage.gaussian_filter(rng.normal(0, 1, (size, size)), 6.0)
        field_ *= recipe.blotches / (field_.std() + 1e-12)
        shade = shade + field_[..., None]
    cell = np.asarray(recipe.color, dtype=np.float64) + shade
    cell = np.clip(cell, 1.0, 254.0)
    cell[..., 2] = np.maximum(cell[..., 2], cell[..., :2].max(axis=-1) + 2.0)
    cell = np.clip(np.rint(cell), 1.0, 255.0)
    out = img.copy()
    out[mask] = cell[mask]
    return out


def make_phantom(rng, recipe: CellRecipe, size: int, background: str) -> tuple[np.ndarray, np.ndarray]:
    mask = cell_shape(rng, recipe, size)
    img = render_cell(rng, recipe, mask, _background(rng, background, size))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), mask


def generate_phantoms(spec: PhantomSpec, outdir) -> DatasetManifest:
    """Write images, ground-truth masks and ``manifest.csv`` under ``outdir``.

    Backgrounds cycle through ``spec.backgrounds`` within each class.  Output
    bytes depend only on ``spec``.
    """
    out = Path(outdir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    streams = np.random.SeedSequence(spec.seed).spawn(2 * spec.n_per_class)
    entries = []
    k = 0
    for label, recipe_name in ((Label.HEALTHY, spec.healthy), (Label.MALIGNANT, spec.malignant)):
        recipe = RECIPES[recipe_name]
        tag = "h" if label is Label.HEALTHY else "m"
        for i in range(spec.n_per_class):
            rng = np.random.default_rng(streams[k])
            k += 1
            bg = spec.backgrounds[i % len(spec.backgrounds)]
            img, mask = make_phantom(rng, recipe, spec.size, bg)
            name = f"{tag}{i:03d}_{bg}.png"
            Image.fromarray(img, "RGB").save(out / "images" / name)
            Image.fromarray(mask.astype(np.uint8) * 255, "L").save(out / "masks" / name)
            entries.append(ManifestEntry(f"images/{name}", label, Source.PHANTOM))
    manifest = DatasetManifest(entries, out)
    manifest.save(out / "manifest.csv")
    (out / "phantom.cfg").write_text(spec.to_text())
    return manifest


def with_backgrounds(spec: PhantomSpec, *styles: str) -> PhantomSpec:
    return replace(spec, backgrounds=tuple(styles))
