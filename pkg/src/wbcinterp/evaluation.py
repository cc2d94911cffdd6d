"""Confusion matrices, exact binomial intervals, F1 and variable-importance
summaries, plus the report files built from them."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .features import CATEGORIES, CATEGORY_OF, FEATURE_NAMES


@dataclass(frozen=True)
class ConfusionMatrix:
    """Healthy is the negative class, Malignant the positive one."""

    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def correct(self) -> int:
        return self.tn + self.tp

    @classmethod
    def from_labels(cls, truth, predicted) -> "ConfusionMatrix":
        t = np.asarray(truth, dtype=int)
        p = np.asarray(predicted, dtype=int)
        return cls(
            tn=int(np.sum((t == 0) & (p == 0))),
            fp=int(np.sum((t == 0) & (p == 1))),
            fn=int(np.sum((t == 1) & (p == 0))),
            tp=int(np.sum((t == 1) & (p == 1))),
        )

    def table(self) -> str:
        rows = [
            ("Prediction/Truth", "Healthy (Negative)", "Malignant (Positive)"),
            ("Healthy (Negative)", str(self.tn), str(self.fn)),
            ("Malignant (Positive)", str(self.fp), str(self.tp)),
        ]
        return "\n".join(f"{a:<22}{b:>20}{c:>22}" for a, b, c in rows)


def clopper_pearson(x: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial interval for ``x`` successes in ``n`` trials."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if not 0 <= x <= n:
        raise ValueError("successes must lie in 0..n")
    alpha = 1.0 - level
    lower = 0.0 if x == 0 else float(stats.beta.ppf(alpha / 2, x, n - x + 1))
    upper = 1.0 if x == n else float(stats.beta.ppf(1 - alpha / 2, x + 1, n - x))
    return lower, upper


def accuracy_with_ci(cm: ConfusionMatrix, level: float = 0.95) -> tuple[float, float, float]:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    lo, hi = clopper_pearson(cm.correct, cm.total, level)
    return cm.correct / cm.total, lo, hi


def f1_score(cm: ConfusionMatrix) -> float:
    """F1 of the Malignant class."""
    if cm.tp + cm.fp == 0:
        raise ValueError("precision undefined: no positive predictions")
    if cm.tp + cm.fn == 0:
        raise ValueError("recall undefined: no positive cases")
    return 2.0 * cm.tp / (2.0 * cm.tp + cm.fp + cm.fn)


def relative_feature_vi(mda) -> np.ndarray:
    """Importances scaled so the largest is 1; negatives count as 0."""
    v = np.clip(np.asarray(mda, dtype=np.float64), 0.0, None)
    if v.max(initial=0.0) <= 0:
        raise ValueError("no feature has positive importance")
    return v / v.max()


def category_vi(mda, categories=CATEGORY_OF) -> dict[str, float]:
    """Sum the (clamped) importances per category and scale by the largest sum."""
    v = np.clip(np.asarray(mda, dtype=np.float64), 0.0, None)
    if len(v) != len(categories):
        raise ValueError(f"expected {len(categories)} importances, got {len(v)}")
    names = list(dict.fromkeys(categories))
    sums = {c: float(sum(x for x, k in zip(v, categories) if k == c)) for c in names}
    top = max(sums.values())
    if top <= 0:
        raise ValueError("no category has positive importance")
    return {c: s / top for c, s in sums.items()}


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    accuracy: float
    ci95: tuple[float, float]
    f1: float | None
    per_feature_vi: list[float] = field(default_factory=list)
    relative_vi: list[float] = field(default_factory=list)
    category_vi: dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, cm: ConfusionMatrix, mda=None) -> "EvaluationReport":
        acc, lo, hi = accuracy_with_ci(cm)
        try:
            f1 = f1_score(cm)
        except ValueError:
            f1 = None
        rep = cls(cm, acc, (lo, hi), f1)
        if mda is not None:
            rep.per_feature_vi = [float(x) for x in mda]
            rep.relative_vi = relative_feature_vi(mda).tolist()
            rep.category_vi = category_vi(mda)
        return rep

    # -- files ------------------------------------------------------------

    def write(self, outdir) -> dict[str, Path]:
        """Write ``metrics.csv``, ``importance.csv``, ``categories.csv`` and
        ``report.txt`` into ``outdir``."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / f"{k}.csv" for k in ("metrics", "importance", "categories")}
        paths["report"] = out / "report.txt"

        cm = self.confusion
        metric_rows = [
            ("accuracy", self.accuracy, self.ci95[0], self.ci95[1]),
            ("f1", "" if self.f1 is None else self.f1, "", ""),
            ("tn", cm.tn, "", ""),
            ("fp", cm.fp, "", ""),
            ("fn", cm.fn, "", ""),
            ("tp", cm.tp, "", ""),
        ]
        _write_csv(paths["metrics"], ("metric", "value", "lower", "upper"), metric_rows)
        _write_csv(
            paths["importance"],
            ("feature", "mda", "relative"),
            zip(FEATURE_NAMES, self.per_feature_vi, self.relative_vi),
        )
        _write_csv(paths["categories"], ("category", "relative"), self.category_vi.items())
        paths["report"].write_text(self.text())
        return paths

    @classmethod
    def read(cls, outdir) -> "EvaluationReport":
        out = Path(outdir)
        metrics = {r["metric"]: r for r in _read_csv(out / "metrics.csv")}
        cm = ConfusionMatrix(*(int(metrics[k]["value"]) for k in ("tn", "fp", "fn", "tp")))
        acc = metrics["accuracy"]
        f1 = metrics["f1"]["value"]
        imp = _read_csv(out / "importance.csv")
        if imp and [r["feature"] for r in imp] != list(FEATURE_NAMES):
            raise ValueError("importance.csv feature column does not match the feature table")
        return cls(
            confusion=cm,
            accuracy=float(acc["value"]),
            ci95=(float(acc["lower"]), float(acc["upper"])),
            f1=float(f1) if f1 else None,
            per_feature_vi=[float(r["mda"]) for r in imp],
            relative_vi=[float(r["relative"]) for r in imp],
            category_vi={r["category"]: float(r["relative"]) for r in _read_csv(out / "categories.csv")},
        )

    def text(self) -> str:
        lo, hi = self.ci95
        lines = [
            "Confusion matrix",
            self.confusion.table(),
            "",
            f"Accuracy  {self.accuracy:.4f}   95% CI ({lo:.4f}, {hi:.4f})",
            f"F1        {'undefined' if self.f1 is None else f'{self.f1:.4f}'}",
        ]
        if self.category_vi:
            lines += ["", "Relative VI by category"]
            for c in sorted(self.category_vi, key=self.category_vi.get, reverse=True):
                lines.append(f"  {c:<10}{self.category_vi[c]:.3f}")
        if self.relative_vi:
            lines += ["", "Relative VI by feature (MDA)"]
            order = np.argsort(self.relative_vi, kind="stable")[::-1]
            for i in order:
                lines.append(f"  {FEATURE_NAMES[i]:<20}{self.relative_vi[i]:.3f}  ({self.per_feature_vi[i]:+.4f})")
        return "\n".join(lines) + "\n"


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


__all__ = [
    "CATEGORIES",
    "ConfusionMatrix",
    "EvaluationReport",
    "accuracy_with_ci",
    "category_vi",
    "clopper_pearson",
    "f1_score",
    "relative_feature_vi",
]
