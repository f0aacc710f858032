"""Bagged Gini decision-tree ensemble with class weighting, gap-ruled tuning
and impurity-based feature importance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GAP_LIMIT = 0.05
DEFAULT_N_TREES = 100
DEFAULT_DEPTH_GRID = (4, 6, 8, 10, 12, 16, 20, None)
DEFAULT_FEAT_GRID = ("sqrt", "log2", "0.1", "0.3")
_EPS = 1e-12


class TrainingError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray  # (n, d), no missing values
    y: np.ndarray  # (n,) integer class ids
    ids: np.ndarray | None = None
    folds: np.ndarray | None = None

    def rows_in_folds(self, folds) -> np.ndarray:
        return np.isin(self.folds, list(folds))


def impute_median(X_train: np.ndarray, *arrays: np.ndarray):
    """Replace NaNs by per-feature training medians (0 for all-NaN features)."""
    med = np.nanmedian(
        np.where(np.isnan(X_train).all(axis=0), 0.0, X_train), axis=0
    )
    med = np.where(np.isnan(med), 0.0, med)
    out = []
    for arr in (X_train,) + arrays:
        filled = arr.copy()
        rows, cols = np.where(np.isnan(filled))
        filled[rows, cols] = med[cols]
        out.append(filled)
    return out[0] if not arrays else tuple(out)


def class_weights(y: np.ndarray, classes: np.ndarray, weighting: str) -> np.ndarray:
    if weighting == "uniform":
        return np.ones(len(classes))
    if weighting == "inverse_frequency":
        counts = np.array([(y == c).sum() for c in classes], dtype=float)
        counts[counts == 0] = 1.0
        return len(y) / (len(classes) * counts)
    raise ValueError(f"unknown weighting: {weighting}")


def resolve_max_features(spec, d: int) -> int:
    if spec is None:
        return d
    if isinstance(spec, (int, np.integer)):
        return max(1, min(int(spec), d))
    s = str(spec)
    if s == "sqrt":
        return max(1, int(np.sqrt(d)))
    if s == "log2":
        return max(1, int(np.log2(d)))
    try:
        frac = float(s)
    except ValueError:
        raise ValueError(f"unknown max_features spec: {spec}") from None
    return max(1, int(frac * d)) if frac < 1 else max(1, min(int(frac), d))


# ---------------------------------------------------------------------------
# Single tree


@dataclass
class _Tree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    dist: list = field(default_factory=list)  # weighted class distribution per node
    importances: np.ndarray | None = None

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.dist.append(None)
        return len(self.feature) - 1

    def predict_dist(self, X: np.ndarray) -> np.ndarray:
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        nodes = np.zeros(X.shape[0], dtype=int)
        while True:
            active = np.nonzero(feat[nodes] >= 0)[0]
            if not active.size:
                break
            cur = nodes[active]
            go_left = X[active, feat[cur]] <= thr[cur]
            nodes[active] = np.where(go_left, left[cur], right[cur])
        return np.stack(self.dist)[nodes]


def _gini(weighted_counts: np.ndarray) -> float:
    total = weighted_counts.sum()
    if total <= 0:
        return 0.0
    p = weighted_counts / total
    return float(1.0 - np.sum(p * p))


def _best_split(X, rows, y_idx, w, feature_ids, n_classes):
    """Best axis-aligned split by weighted Gini decrease over `rows`.

    Thresholds sit at midpoints of consecutive distinct values. Ties break
    toward the lower feature id, then the lower threshold.
    """
    ys = y_idx[rows]
    ws = w[rows]
    counts = np.zeros(n_classes)
    np.add.at(counts, ys, ws)
    total = counts.sum()
    parent_gini = _gini(counts)
    best = None  # (decrease, feature, threshold)
    for f in feature_ids:
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs, yo, wo = x[order], ys[order], ws[order]
        boundaries = np.nonzero(np.diff(xs) > 0)[0]  # split after position b
        if not boundaries.size:
            continue
        onehot = np.zeros((len(yo), n_classes))
        onehot[np.arange(len(yo)), yo] = wo
        cum = np.cumsum(onehot, axis=0)
        left = cum[boundaries]  # (m, C)
        right = counts - left
        wl = left.sum(axis=1)
        wr = right.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = 1.0 - np.sum((left / wl[:, None]) ** 2, axis=1)
            gr = 1.0 - np.sum((right / wr[:, None]) ** 2, axis=1)
        decrease = parent_gini - (wl * gl + wr * gr) / total
        decrease[(wl <= 0) | (wr <= 0)] = -np.inf
        k = int(np.argmax(decrease))  # first max: lowest threshold on ties
        if decrease[k] <= _EPS:
            continue
        if best is None or decrease[k] > best[0] + _EPS:
            threshold = (xs[boundaries[k]] + xs[boundaries[k] + 1]) / 2.0
            best = (float(decrease[k]), int(f), float(threshold))
    return best, counts, parent_gini


def _fit_tree(X, y_idx, w, max_depth, max_features, n_classes, rng) -> _Tree:
    tree = _Tree()
    tree.importances = np.zeros(X.shape[1])
    root_weight = w.sum()

    def grow(rows: np.ndarray, depth: int) -> int:
        node = tree.add_node()
        sub_w = w[rows]
        counts = np.zeros(n_classes)
        np.add.at(counts, y_idx[rows], sub_w)
        tree.dist[node] = counts / counts.sum()
        if (max_depth is not None and depth >= max_depth) or len(np.unique(y_idx[rows])) < 2:
            return node
        d = X.shape[1]
        k = resolve_max_features(max_features, d)
        feats = np.sort(rng.choice(d, size=k, replace=False)) if k < d else np.arange(d)
        best, _, parent_gini = _best_split(X, rows, y_idx, w, feats, n_classes)
        if best is None:
            return node
        decrease, f, threshold = best
        mask = X[rows, f] <= threshold
        # The midpoint of two adjacent floats can round onto one of them,
        # leaving an empty side; treat that as unsplittable.
        if mask.all() or not mask.any():
            return node
        tree.feature[node] = int(f)
        tree.threshold[node] = float(threshold)
        tree.importances[f] += (sub_w.sum() / root_weight) * decrease
        tree.left[node] = grow(rows[mask], depth + 1)
        tree.right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return tree


# ---------------------------------------------------------------------------
# Forest


@dataclass
class ForestModel:
    trees: list[_Tree]
    classes: np.ndarray
    n_trees: int
    max_depth: int | None
    max_features: object
    weighting: str
    seed: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        acc = np.zeros((X.shape[0], len(self.classes)))
        for tree in self.trees:
            acc += tree.predict_dist(X)
        return acc / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes[np.argmax(proba, axis=1)]  # argmax tie -> lowest class id

    def save(self, path: str | Path) -> None:
        doc = {
            "format": "morpholcz-forest-v1",
            "classes": self.classes.tolist(),
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "max_features": self.max_features,
            "weighting": self.weighting,
            "seed": self.seed,
            "trees": [
                {
                    "feature": t.feature,
                    "threshold": [None if np.isnan(v) else v for v in t.threshold],
                    "left": t.left,
                    "right": t.right,
                    "dist": [d.tolist() for d in t.dist],
                    "importances": t.importances.tolist(),
                }
                for t in self.trees
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != "morpholcz-forest-v1":
            raise ValueError(f"{path}: unknown model format")
        trees = []
        for td in doc["trees"]:
            t = _Tree(
                feature=td["feature"],
                threshold=[np.nan if v is None else v for v in td["threshold"]],
                left=td["left"],
                right=td["right"],
                dist=[np.asarray(d) for d in td["dist"]],
            )
            t.importances = np.asarray(td["importances"])
            trees.append(t)
        return cls(
            trees=trees,
            classes=np.asarray(doc["classes"]),
            n_trees=doc["n_trees"],
            max_depth=doc["max_depth"],
            max_features=doc["max_features"],
            weighting=doc["weighting"],
            seed=doc["seed"],
        )


def train(
    X: np.ndarray,
    y: np.ndarray,
    weighting: str = "uniform",
    n_trees: int = DEFAULT_N_TREES,
    max_depth: int | None = None,
    max_features=None,
    seed: int = 0,
    bootstrap: bool = True,
) -> ForestModel:
    """Fit a bagged ensemble of Gini trees with class-weighted impurity."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise TrainingError("training data spans a single class")
    y_idx = np.searchsorted(classes, y)
    cw = class_weights(y, classes, weighting)
    w = cw[y_idx]

    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    n = X.shape[0]
    for t in range(n_trees):
        rng = np.random.default_rng(seeds[t])
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(
            _fit_tree(X[rows], y_idx[rows], w[rows], max_depth, max_features,
                      len(classes), rng)
        )
    return ForestModel(
        trees=trees, classes=classes, n_trees=n_trees, max_depth=max_depth,
        max_features=max_features, weighting=weighting, seed=seed,
    )


def overall_accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


@dataclass
class TuningReport:
    grid: list[dict]
    chosen: dict
    rule: str  # "gap<5%" or "min-gap fallback"

    def as_dict(self) -> dict:
        return {"grid": self.grid, "chosen": self.chosen, "rule": self.rule}


def tune(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: np.ndarray,
    y_test: np.ndarray,
    weighting: str = "uniform",
    depth_grid=DEFAULT_DEPTH_GRID,
    feat_grid=DEFAULT_FEAT_GRID,
    n_trees: int = DEFAULT_N_TREES,
    seed: int = 0,
) -> tuple[ForestModel, TuningReport]:
    """Grid search on (max_depth, max_features) under the generalization-gap
    rule: highest test OA among points with train-test gap < 5%; when no point
    qualifies, the smallest gap wins. Ties prefer smaller depth, then fewer
    features."""
    if not depth_grid or not feat_grid:
        raise ValueError("empty tuning grid")
    entries = []
    models = {}
    for depth in depth_grid:
        for feats in feat_grid:
            model = train(
                X_train, y_train, weighting=weighting, n_trees=n_trees,
                max_depth=depth, max_features=feats, seed=seed,
            )
            train_oa = overall_accuracy(y_train, model.predict(X_train))
            test_oa = overall_accuracy(y_test, model.predict(X_test))
            gap = train_oa - test_oa
            key = (depth, feats)
            models[key] = model
            entries.append(
                {"max_depth": depth, "max_features": feats,
                 "train_oa": train_oa, "test_oa": test_oa, "gap": gap}
            )

    def depth_rank(e):
        return np.inf if e["max_depth"] is None else e["max_depth"]

    def feat_rank(e):
        d = X_train.shape[1]
        return resolve_max_features(e["max_features"], d)

    compliant = [e for e in entries if e["gap"] < GAP_LIMIT]
    if compliant:
        rule = "gap<5%"
        chosen = min(compliant, key=lambda e: (-e["test_oa"], depth_rank(e), feat_rank(e)))
    else:
        rule = "min-gap fallback"
        chosen = min(entries, key=lambda e: (e["gap"], depth_rank(e), feat_rank(e)))
    model = models[(chosen["max_depth"], chosen["max_features"])]
    return model, TuningReport(grid=entries, chosen=chosen, rule=rule)


def importance(model: ForestModel) -> list[tuple[int, float]]:
    """Mean normalized Gini impurity decrease per feature, descending;
    scores sum to 1. Ties rank by feature index."""
    per_tree = []
    for tree in model.trees:
        imp = tree.importances
        s = imp.sum()
        per_tree.append(imp / s if s > 0 else imp)
    mean_imp = np.mean(per_tree, axis=0)
    total = mean_imp.sum()
    if total > 0:
        mean_imp = mean_imp / total
    order = np.lexsort((np.arange(len(mean_imp)), -mean_imp))
    return [(int(f), float(mean_imp[f])) for f in order]


def top_k(importances: list[tuple[int, float]], k: int = 20) -> list[int]:
    if len(importances) < k:
        import warnings

        warnings.warn(f"only {len(importances)} features available, requested {k}")
    return [f for f, _ in importances[:k]]
