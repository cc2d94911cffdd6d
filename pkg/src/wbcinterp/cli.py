"""Command-line entry point: ``wbcinterp {segment,extract,train,evaluate,phantom,pipeline}``."""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import forest
from .dataset import (
    RECIPES,
    DatasetManifest,
    ImageDecodeError,
    PhantomSpec,
    build_manifest,
    extract_all,
    generate_phantoms,
    load_image,
    load_matrix,
    save_gray,
    save_mask,
    save_matrix,
    save_rgb,
)
from .evaluation import ConfusionMatrix, EvaluationReport
from .features import FEATURE_NAMES
from .raster import ColorSpace
from .segmentation import SegmentationParams, segment_cell
from .shape import HarrisConfig

log = logging.getLogger("wbcinterp")


class CliError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    n_trees: int = 500
    grid_max: int = 10
    folds: int = 5
    test_fraction: float = 0.2
    min_node_size: int = 1
    permutation_repeats: int = 5
    delta: float = 0.01
    harris_k: float = 0.05
    harris_sigma: float = 2.0
    harris_threshold: float = 0.01
    harris_nms_window: int = 5
    harris_min_response: float = 0.25

    def __post_init__(self):
        if self.n_trees < 1 or self.folds < 2 or not 1 <= self.grid_max <= len(FEATURE_NAMES):
            raise ValueError("n_trees >= 1, folds >= 2 and 1 <= grid_max <= 24 are required")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")

    @property
    def harris(self) -> HarrisConfig:
        return HarrisConfig(self.harris_k, self.harris_sigma, self.harris_threshold,
                            self.harris_nms_window, self.harris_min_response)

    @property
    def segmentation(self) -> SegmentationParams:
        return SegmentationParams(delta=self.delta)

    @property
    def grid(self) -> range:
        return range(1, self.grid_max + 1)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cp = configparser.ConfigParser()
        cp.read_string("[run]\n" + Path(path).read_text())
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in cp["run"].items():
            if key not in known:
                raise CliError(f"{path}: unknown config key {key!r}")
            kw[key] = float(raw) if known[key] == "float" else int(raw)
        return cls(**kw)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def _config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        "seed": args.seed,
        "n_trees": args.trees,
        "folds": args.folds,
        "grid_max": args.grid_max,
    }
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- segment ------------------------------------------------------------------

def _collect_inputs(inputs) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files += sorted(q for q in p.rglob("*") if q.is_file())
        else:
            files.append(p)
    return files


def cmd_segment(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    errors = []
    for path in _collect_inputs(args.inputs):
        try:
            res = segment_cell(load_image(path), trace=args.trace, params=cfg.segmentation)
        except Exception as exc:  # noqa: BLE001 - reported per file
            errors.append(f"{path}\t{type(exc).__name__}: {exc}")
            log.error("%s: %s", path, exc)
            continue
        save_mask(res.mask, out / f"{path.stem}_mask.png")
        if args.trace:
            for i, (stage, img) in enumerate(res.intermediate_trace):
                target = out / f"{path.stem}_{i:02d}_{stage}.png"
                if img.colorspace is ColorSpace.RGB:
                    save_rgb(img, target)
                elif img.colorspace is ColorSpace.BINARY:
                    save_mask(img, target)
                else:
                    save_gray(img, target)
        log.info("%s: %d cell pixels", path, res.cell_pixel_count)
    if errors:
        (out / "segment_errors.log").write_text("\n".join(errors) + "\n")
        return 1
    return 0


# -- extract ------------------------------------------------------------------

def _manifest(source, layout: str) -> DatasetManifest:
    p = Path(source)
    if p.is_dir():
        return build_manifest(p, layout)
    return DatasetManifest.load(p)


def run_extract(manifest: DatasetManifest, out_matrix, cfg: RunConfig) -> tuple[Path, int]:
    outcome = extract_all(manifest, cfg.segmentation, cfg.harris)
    out_matrix = Path(out_matrix)
    out_matrix.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(outcome.matrix, out_matrix)
    skip = out_matrix.with_name(out_matrix.stem + "_skipped.csv")
    with open(skip, "w") as fh:
        fh.write("path,reason\n")
        for path in manifest.skipped:
            fh.write(f"{path},unlabelled\n")
        for path, reason in outcome.failures:
            fh.write(f"{path},\"{reason}\"\n")
    log.info("extracted %d rows, %d failures", len(outcome.matrix), len(outcome.failures))
    return out_matrix, len(outcome.failures)


def cmd_extract(args) -> int:
    cfg = _config(args)
    run_extract(_manifest(args.manifest, args.layout), args.out, cfg)
    return 0


# -- train --------------------------------------------------------------------

def run_train(matrix_path, outdir, cfg: RunConfig) -> dict:
    matrix = load_matrix(matrix_path)
    y = matrix.y
    X = matrix.values
    if len(set(y.tolist())) < 2:
        raise CliError("training needs both classes in the matrix")
    try:
        train_idx, val_idx = forest.stratified_split(y, cfg.test_fraction, cfg.seed)
        tune = forest.cross_validate(
            X[train_idx], y[train_idx], cfg.folds, cfg.grid, cfg.n_trees, cfg.seed, cfg.min_node_size
        )
    except forest.InsufficientDataError as exc:
        raise CliError(f"insufficient data: {exc}") from exc
    model = forest.train_forest(
        X[train_idx], y[train_idx], tune.chosen_mtry, cfg.n_trees, cfg.seed, cfg.min_node_size, FEATURE_NAMES
    )
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    forest.save_model(model, out / "model.json")
    with open(out / "tune.csv", "w") as fh:
        fh.write("mtry,cv_accuracy\n")
        for m, a in zip(tune.grid, tune.cv_accuracy):
            fh.write(f"{m},{a!r}\n")
    split = {
        "matrix_sha256": _sha256(matrix_path),
        "train_index": train_idx.tolist(),
        "validation_index": val_idx.tolist(),
        "train_ids": [matrix.source_ids[i] for i in train_idx],
        "validation_ids": [matrix.source_ids[i] for i in val_idx],
        "chosen_mtry": tune.chosen_mtry,
    }
    (out / "split.json").write_text(json.dumps(split, indent=1))
    (out / "run.cfg").write_text(cfg.to_text())
    log.info("chosen mtry=%d (cv accuracy %.4f)", tune.chosen_mtry, max(tune.cv_accuracy))
    return {"model": out / "model.json", "split": out / "split.json", "tune": tune}


def cmd_train(args) -> int:
    run_train(args.matrix, args.out, _config(args))
    return 0


# -- evaluate -----------------------------------------------------------------

def run_evaluate(model_path, matrix_path, split_path, outdir, cfg: RunConfig) -> EvaluationReport:
    model = forest.load_model(model_path)
    if list(model.feature_names) != list(FEATURE_NAMES):
        raise CliError("model feature order does not match the feature table")
    matrix = load_matrix(matrix_path)
    split = json.loads(Path(split_path).read_text())
    if split["matrix_sha256"] != _sha256(matrix_path):
        raise CliError("matrix differs from the one the model was trained on")
    tr = np.asarray(split["train_index"], dtype=np.intp)
    va = np.asarray(split["validation_index"], dtype=np.intp)
    if np.intersect1d(tr, va).size:
        raise CliError("split file overlaps training and validation rows")
    if len(tr) != model.n_samples:
        raise CliError("split file does not match the model's training rows")
    X, y = matrix.values, matrix.y
    cm = ConfusionMatrix.from_labels(y[va], model.predict(X[va]))
    mda = forest.permutation_importance(model, X[tr], y[tr], cfg.seed, cfg.permutation_repeats)
    try:
        report = EvaluationReport.build(cm, mda)
    except ValueError:
        log.warning("no feature has positive importance; relative VI omitted")
        report = EvaluationReport.build(cm)
        report.per_feature_vi = mda.tolist()
    report.write(outdir)
    return report


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.confusion:
        try:
            tn, fp, fn, tp = (int(v) for v in args.confusion.split(","))
        except ValueError:
            raise CliError("--confusion expects tn,fp,fn,tp") from None
        report = EvaluationReport.build(ConfusionMatrix(tn, fp, fn, tp))
        report.write(args.out)
    else:
        if not (args.model and args.matrix and args.split):
            raise CliError("evaluate needs MODEL MATRIX --split, or --confusion")
        report = run_evaluate(args.model, args.matrix, args.split, args.out, cfg)
    sys.stderr.write(report.text())
    return 0


# -- phantom / pipeline -------------------------------------------------------

def _phantom_spec(args) -> PhantomSpec:
    spec = PhantomSpec.from_file(args.spec) if args.spec else PhantomSpec()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.n is not None:
        kw["n_per_class"] = args.n
    if args.classes:
        parts = [p.strip() for p in args.classes.split(",")]
        if len(parts) != 2:
            raise CliError("--classes expects HEALTHY_RECIPE,MALIGNANT_RECIPE")
        kw["healthy"], kw["malignant"] = parts
    if args.backgrounds:
        kw["backgrounds"] = tuple(b.strip() for b in args.backgrounds.split(","))
    try:
        return replace(spec, **kw)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_phantom(args) -> int:
    manifest = generate_phantoms(_phantom_spec(args), args.out)
    log.info("wrote %d phantoms to %s", len(manifest), args.out)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    manifest = generate_phantoms(_phantom_spec(args), out / "phantoms")
    matrix, _ = run_extract(manifest, out / "features.csv", cfg)
    trained = run_train(matrix, out / "model", cfg)
    run_evaluate(trained["model"], matrix, trained["split"], out / "report", cfg)
    sys.stderr.write((out / "report" / "report.txt").read_text())
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--config", help="key = value run config file")
    common.add_argument("--trees", type=int, help="trees per forest (default 500)")
    common.add_argument("--folds", type=int, help="CV folds (default 5)")
    common.add_argument("--grid-max", type=int, dest="grid_max", help="largest mtry tried (default 10)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="wbcinterp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common], help="write one binary mask per input image")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="store_true", help="also write every intermediate stage")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("extract", parents=[common], help="build the 24-feature matrix")
    p.add_argument("manifest", help="manifest.csv, or an image directory labelled by --layout")
    p.add_argument("--layout", default="allidb2", help="allidb2 | cnmc | folders (directory input only)")
    p.add_argument("--out", required=True, help="output matrix CSV")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="split, tune mtry by CV, refit")
    p.add_argument("matrix")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score the held-out split")
    p.add_argument("model", nargs="?")
    p.add_argument("matrix", nargs="?")
    p.add_argument("--split", help="split.json written by train")
    p.add_argument("--confusion", help="report on given counts tn,fp,fn,tp instead of a model")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    for name, func, help_ in (
        ("phantom", cmd_phantom, "generate a synthetic labelled dataset"),
        ("pipeline", cmd_pipeline, "phantom -> extract -> train -> evaluate"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--spec", help="phantom spec file (key = value)")
        p.add_argument("--n", type=int, help="images per class")
        p.add_argument(
            "--classes",
            help=f"HEALTHY,MALIGNANT recipe names from: {', '.join(sorted(RECIPES))}",
        )
        p.add_argument("--backgrounds", help="comma list from: tissue, plain, black")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CliError, ImageDecodeError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
