"""Random forest classifier built from Gini CART trees, with the training
protocol around it: stratified hold-out split, stratified k-fold grid search
over ``mtry``, refit, and out-of-bag permutation importance.

Labels are integers: 0 = Healthy (negative), 1 = Malignant (positive).
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

HEALTHY, MALIGNANT = 0, 1
FORMAT_NAME = "wbcinterp-forest"
FORMAT_VERSION = 1
_TOL = 1e-12


class InsufficientDataError(ValueError):
    pass


# -- splitting ----------------------------------------------------------------

def stratified_split(y, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (training pool, validation set) class by class.

    Each class contributes ``round(test_fraction * n_class)`` samples to the
    validation set.  Both returned index arrays are sorted.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise InsufficientDataError(f"need two classes, found {classes.tolist()}")
    if counts.min() < 2:
        raise InsufficientDataError(f"every class needs at least 2 samples, got {dict(zip(classes.tolist(), counts.tolist()))}")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        n_val = int(np.floor(test_fraction * len(idx) + 0.5))
        n_val = min(max(n_val, 1), len(idx) - 1)
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def stratified_folds(y, folds: int = 5, seed: int = 0) -> np.ndarray:
    """Fold id (0..folds-1) per sample, dealt round-robin within each class."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts.min() < folds:
        raise InsufficientDataError(
            f"{folds}-fold CV needs at least {folds} samples in each of two classes, "
            f"got {dict(zip(classes.tolist(), counts.tolist()))}"
        )
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.intp)
    offset = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        # continue the deal where the previous class stopped so fold sizes stay level
        fold_of[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return fold_of


# -- trees --------------------------------------------------------------------

def gini(pos: int, n: int) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


@dataclass
class DecisionTree:
    """Flat array tree.  ``feature == -1`` marks a leaf; samples with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) class counts of the training rows reaching the node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaf_label(self) -> np.ndarray:
        return (self.counts[:, 1] >= self.counts[:, 0]).astype(np.intp)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            n_in = node[inner]
            go_left = X[rows[inner], f[inner]] <= self.threshold[n_in]
            node[inner] = np.where(go_left, self.left[n_in], self.right[n_in])

    def predict(self, X) -> np.ndarray:
        return self.leaf_label[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.intp),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.intp),
            np.asarray(d["right"], dtype=np.intp),
            np.asarray(d["counts"], dtype=np.int64).reshape(-1, 2),
        )


def best_split(X: np.ndarray, y: np.ndarray, features) -> tuple[int, float, float] | None:
    """Lowest weighted child Gini over ``features`` for rows ``(X, y)``.

    Returns ``(feature, threshold, child_gini)`` or None when every listed
    feature is constant.  Thresholds sit midway between adjacent distinct
    values.  Ties resolve to the lowest feature index, then lowest threshold.
    """
    features = np.asarray(features, dtype=np.intp)
    n = len(y)
    if n < 2 or len(features) == 0:
        return None
    xs = X[:, features]
    order = np.argsort(xs, axis=0, kind="stable")
    xs = np.take_along_axis(xs, order, axis=0)
    ys = y[order]
    pos_left = np.cumsum(ys, axis=0)[:-1].astype(np.float64)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    pos_right = ys.sum(axis=0)[None, :] - pos_left
    cost = (pos_left * (n_left - pos_left) / n_left + pos_right * (n_right - pos_right) / n_right) * (2.0 / n)
    valid = xs[1:] > xs[:-1]
    cost = np.where(valid, cost, np.inf)
    best = cost.min()
    if not np.isfinite(best):
        return None
    cand_i, cand_j = np.nonzero(cost <= best + _TOL)
    # lowest feature index first, then lowest threshold (= earliest row)
    pick = np.lexsort((cand_i, features[cand_j]))[0]
    i, j = cand_i[pick], cand_j[pick]
    thr = 0.5 * (xs[i, j] + xs[i + 1, j])
    return int(features[j]), float(thr), float(cost[i, j])


def train_tree(X, y, mtry: int, rng: np.random.Generator, min_node_size: int = 1) -> DecisionTree:
    """Grow a CART tree until nodes are pure or smaller than ``min_node_size``.

    Each node scores ``mtry`` features drawn without replacement; if all of
    them are constant on the node, the remaining features are tried in the
    same random order before giving up.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    n_features = X.shape[1]
    if not 1 <= mtry <= n_features:
        raise ValueError(f"mtry must be in 1..{n_features}, got {mtry}")

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        pos = int(y[idx].sum())
        counts.append((len(idx) - pos, pos))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        neg, pos = counts[node]
        if neg == 0 or pos == 0 or len(idx) < max(2, min_node_size):
            continue
        order = rng.permutation(n_features)
        Xn, yn = X[idx], y[idx]
        split = best_split(Xn, yn, order[:mtry])
        if split is None and mtry < n_features:
            split = best_split(Xn, yn, order[mtry:])
        if split is None:
            continue
        f, thr, _ = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))

    return DecisionTree(
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        np.asarray(counts, dtype=np.int64).reshape(-1, 2),
    )


# -- forest -------------------------------------------------------------------

def tree_rngs(seed: int, n_trees: int) -> list[np.random.Generator]:
    """Per-tree generators; tree ``t`` gets the same stream whatever ``n_trees`` is."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_trees)]


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    mtry: int
    n_trees: int
    oob_records: list[np.ndarray]
    rng_seed: int
    n_samples: int
    n_features: int
    min_node_size: int = 1
    feature_names: list[str] = field(default_factory=list)

    def votes(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict_with_votes(self, X, tie_label: int = MALIGNANT) -> tuple[np.ndarray, np.ndarray]:
        """Majority vote and malignant vote fraction; exact ties go to ``tie_label``."""
        v = self.votes(X)
        frac = v / self.n_trees
        labels = np.where(2 * v > self.n_trees, MALIGNANT, HEALTHY)
        labels[2 * v == self.n_trees] = tie_label
        return labels, frac

    def predict(self, X) -> np.ndarray:
        return self.predict_with_votes(X)[0]

    def oob_predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """OOB majority label per training row and the number of OOB votes it got.

        Rows never out of bag get label -1.
        """
        X = _check_X(X, self.n_features)
        if len(X) != self.n_samples:
            raise ValueError("OOB prediction needs the training rows the model was fit on")
        mal = np.zeros(len(X))
        cnt = np.zeros(len(X))
        for tree, oob in zip(self.trees, self.oob_records):
            if len(oob):
                mal[oob] += tree.predict(X[oob])
                cnt[oob] += 1
        labels = np.where(cnt == 0, -1, np.where(2 * mal >= cnt, MALIGNANT, HEALTHY))
        return labels, cnt

    def oob_accuracy(self, X, y) -> float:
        labels, cnt = self.oob_predict(X)
        seen = cnt > 0
        return float(np.mean(labels[seen] == np.asarray(y)[seen]))

    def feature_hash(self) -> str:
        return hashlib.sha256("\n".join(self.feature_names).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "mtry": self.mtry,
            "n_trees": self.n_trees,
            "rng_seed": self.rng_seed,
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "min_node_size": self.min_node_size,
            "feature_names": list(self.feature_names),
            "feature_hash": self.feature_hash(),
            "oob_records": [o.tolist() for o in self.oob_records],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestModel":
        if d.get("format") != FORMAT_NAME or d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format')!r} v{d.get('version')!r}")
        model = cls(
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            mtry=d["mtry"],
            n_trees=d["n_trees"],
            oob_records=[np.asarray(o, dtype=np.intp) for o in d["oob_records"]],
            rng_seed=d["rng_seed"],
            n_samples=d["n_samples"],
            n_features=d["n_features"],
            min_node_size=d.get("min_node_size", 1),
            feature_names=list(d["feature_names"]),
        )
        if model.feature_hash() != d["feature_hash"]:
            raise ValueError("feature ordering hash mismatch")
        return model


def _check_X(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected (n, {n_features}) features, got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature values must be finite")
    return X


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def train_forest(
    X, y, mtry: int, n_trees: int = 500, seed: int = 0, min_node_size: int = 1, feature_names=None
) -> RandomForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    X = _check_X(X, X.shape[1] if X.ndim == 2 else -1)
    if len(X) != len(y) or len(y) == 0:
        raise ValueError("X and y must be non-empty and of equal length")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n = len(y)
    trees, oobs = [], []
    for rng in tree_rngs(seed, n_trees):
        boot = bootstrap_indices(rng, n)
        trees.append(train_tree(X[boot], y[boot], mtry, rng, min_node_size))
        inbag = np.zeros(n, dtype=bool)
        inbag[boot] = True
        oobs.append(np.flatnonzero(~inbag))
    return RandomForestModel(
        trees=trees,
        mtry=mtry,
        n_trees=n_trees,
        oob_records=oobs,
        rng_seed=seed,
        n_samples=n,
        n_features=X.shape[1],
        min_node_size=min_node_size,
        feature_names=list(feature_names or []),
    )


def save_model(model: RandomForestModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), separators=(",", ":")))


def load_model(path) -> RandomForestModel:
    return RandomForestModel.from_dict(json.loads(Path(path).read_text()))


# -- tuning -------------------------------------------------------------------

class FoldLeakageError(AssertionError):
    pass


@dataclass
class TuneResult:
    grid: list[int]
    cv_accuracy: list[float]
    chosen_mtry: int
    fold_accuracy: list[list[float]] = field(default_factory=list)
    fold_of: np.ndarray | None = None


def cross_validate(
    X, y, folds: int = 5, grid=range(1, 11), n_trees: int = 500, seed: int = 0, min_node_size: int = 1
) -> TuneResult:
    """Stratified k-fold grid search over ``mtry``.

    Every grid point sees the same folds.  The score is the unweighted mean of
    held-out fold accuracies; ties go to the smallest ``mtry``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    grid = [g for g in grid if g <= X.shape[1]]
    if not grid:
        raise ValueError("empty mtry grid")
    fold_of = stratified_folds(y, folds, seed)
    splits = []
    for k in range(folds):
        test = np.flatnonzero(fold_of == k)
        train = np.flatnonzero(fold_of != k)
        if np.intersect1d(train, test).size or len(train) + len(test) != len(y):
            raise FoldLeakageError(f"fold {k} trains on held-out rows")
        splits.append((train, test))

    means, per_fold = [], []
    for m in grid:
        accs = []
        for k, (train, test) in enumerate(splits):
            sub_seed = int(np.random.SeedSequence([seed, m, k]).generate_state(1)[0])
            model = train_forest(X[train], y[train], m, n_trees, sub_seed, min_node_size)
            accs.append(float(np.mean(model.predict(X[test]) == y[test])))
        per_fold.append(accs)
        means.append(float(np.mean(accs)))
        log.info("mtry=%d cv accuracy %.4f", m, means[-1])
    best = max(means)
    chosen = next(m for m, a in zip(grid, means) if a >= best - _TOL)
    return TuneResult(list(grid), means, chosen, per_fold, fold_of)


# -- importance ---------------------------------------------------------------

def permutation_importance(model: RandomForestModel, X, y, seed: int = 0, n_repeats: int = 5) -> np.ndarray:
    """Mean decrease in accuracy per feature, measured out of bag.

    For each tree, accuracy on its OOB rows is compared with accuracy after
    shuffling one column among those rows; differences are averaged over trees
    and repeats.  ``X, y`` must be the rows the model was trained on.
    """
    X = _check_X(X, model.n_features)
    y = np.asarray(y, dtype=np.intp)
    if len(X) != model.n_samples:
        raise ValueError("OOB importance needs the training rows the model was fit on")
    rng = np.random.default_rng(seed)
    drop = np.zeros(model.n_features)
    used = 0
    for tree, oob in zip(model.trees, model.oob_records):
        if len(oob) == 0:
            continue
        used += 1
        Xo, yo = X[oob], y[oob]
        base = np.mean(tree.predict(Xo) == yo)
        split_feats = set(tree.feature[tree.feature >= 0].tolist())
        for q in split_feats:
            col = Xo[:, q].copy()
            acc = 0.0
            for _ in range(n_repeats):
                Xo[:, q] = rng.permutation(col)
                acc += np.mean(tree.predict(Xo) == yo)
            Xo[:, q] = col
            drop[q] += base - acc / n_repeats
    return drop / max(used, 1)


def permuted_accuracy(model: RandomForestModel, X, y, columns, seed: int = 0) -> float:
    """Forest accuracy on ``(X, y)`` after independently shuffling ``columns``."""
    X = _check_X(X, model.n_features).copy()
    rng = np.random.default_rng(seed)
    for q in columns:
        X[:, q] = rng.permutation(X[:, q])
    return float(np.mean(model.predict(X) == np.asarray(y)))
