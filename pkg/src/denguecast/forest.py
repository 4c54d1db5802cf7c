"""Bootstrap ensemble of CART regression trees.

Each tree draws its randomness from its own generator,
``PCG64(SeedSequence(master_seed, spawn_key=(tree_index,)))``, so the forest is
bit-identical whatever the number of workers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FORMAT_TAG = "denguecast-forest"
FORMAT_VERSION = 1

# relative SSE slack under which two candidate splits count as tied
TIE_RTOL = 1e-12


def tree_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "count": self.count.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["count"], dtype=np.int64),
        )


def best_split(X: np.ndarray, y: np.ndarray, columns) -> Optional[tuple[int, float, float]]:
    """Lowest child SSE over midpoints between consecutive distinct values.

    Returns (column, threshold, child SSE) or None when no split exists.
    Splits whose SSE is within ``TIE_RTOL`` times the node's SSE of the minimum
    are tied; the lowest column index wins, then the lowest threshold.
    """
    n = len(y)
    # centring keeps the cumulative-sum SSE accurate relative to the node SSE
    y = y - y.mean()
    parent = float(y @ y)
    total = y.sum()
    scans = []
    for col in sorted(int(c) for c in columns):
        order = np.argsort(X[:, col], kind="stable")
        xs, ys = X[order, col], y[order]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if len(valid) == 0:
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        nl = valid + 1.0
        sl, sql = csum[valid], csq[valid]
        sr, sqr = total - sl, csq[-1] - sql
        sse = (sql - sl * sl / nl) + (sqr - sr * sr / (n - nl))
        scans.append((col, xs, valid, sse))
    if not scans:
        return None
    floor = min(float(sse.min()) for _, _, _, sse in scans)
    limit = floor + TIE_RTOL * max(abs(floor), parent)
    for col, xs, valid, sse in scans:
        hits = np.flatnonzero(sse <= limit)
        if len(hits):
            i = valid[hits[0]]
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            return col, float(thr), float(sse[hits[0]])
    return None


def fit_tree(X, y, mtry: int, min_node: int, rng: Optional[np.random.Generator] = None) -> RegressionTree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 1:
        raise ValueError("cannot fit a tree on zero rows")
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}]")
    if rng is None:
        rng = np.random.default_rng(0)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        yr = y[rows]
        # offset form is exact when the node is pure
        value.append(float(yr[0] + np.mean(yr - yr[0])))
        count.append(len(rows))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n))]
    # depth-first, left child first; the rng is consumed in this order
    while stack:
        node, rows = stack.pop()
        yr = y[rows]
        if len(rows) < 2 * min_node or np.all(yr == yr[0]):
            continue
        cols = rng.choice(p, size=mtry, replace=False) if mtry < p else np.arange(p)
        split = best_split(X[rows], yr, cols)
        if split is None:
            continue
        col, thr, sse = split
        parent_sse = float(np.sum((yr - yr.mean()) ** 2))
        if not sse < parent_sse * (1.0 - TIE_RTOL):
            continue
        go_left = X[rows, col] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = col, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows))
        stack.append((left[node], lrows))
    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(count, dtype=np.int64),
    )


def bootstrap_indices(master_seed: int, index: int, n: int) -> tuple[np.ndarray, np.random.Generator]:
    rng = tree_rng(master_seed, index)
    return rng.integers(0, n, size=n), rng


def _fit_one(X, y, master_seed, index, mtry, min_node, bootstrap):
    if bootstrap:
        idx, rng = bootstrap_indices(master_seed, index, len(y))
    else:
        idx, rng = np.arange(len(y)), tree_rng(master_seed, index)
    return fit_tree(X[idx], y[idx], mtry, min_node, rng)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    mtry: int
    min_node: int
    seed: int
    n_train: int
    n_features: int
    bootstrap: bool = True
    oob_masks: Optional[np.ndarray] = field(default=None, repr=False)

    def tree_predictions(self, X) -> np.ndarray:
        X = _check_rows(X, self.n_features)
        return np.vstack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def in_bag(self) -> np.ndarray:
        """(trees, n_train) counts of each training row in each bootstrap sample."""
        counts = np.zeros((len(self.trees), self.n_train), dtype=np.int64)
        for i in range(len(self.trees)):
            if self.bootstrap:
                idx, _ = bootstrap_indices(self.seed, i, self.n_train)
                counts[i] = np.bincount(idx, minlength=self.n_train)
            else:
                counts[i] = 1
        return counts

    def dumps(self) -> str:
        return dumps_forest(self)


def _check_rows(X, p):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != p:
        raise ValueError(f"expected rows with {p} columns, got {X.shape[1]}")
    return X


def fit_forest(
    design,
    trees: int = 500,
    mtry: int = 3,
    min_node: int = 5,
    seed: int = 0,
    n_jobs: int = 1,
    bootstrap: bool = True,
) -> ForestModel:
    """Fit ``trees`` CART trees on bootstrap resamples of ``design``.

    ``design`` is a DesignMatrix or an ``(X, y)`` pair.
    """
    if isinstance(design, tuple):
        X, y = design
    else:
        X, y = design.X, design.y
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if trees < 1:
        raise ValueError("a forest needs at least one tree")
    if len(y) == 0:
        raise ValueError("design is empty")
    if not 1 <= mtry <= X.shape[1]:
        raise ValueError(f"mtry must lie in [1, {X.shape[1]}]")
    seed = int(seed)
    args = (mtry, min_node, bootstrap)
    if n_jobs == 1:
        fitted = [_fit_one(X, y, seed, i, *args) for i in range(trees)]
    else:
        from joblib import Parallel, delayed

        fitted = Parallel(n_jobs=n_jobs)(delayed(_fit_one)(X, y, seed, i, *args) for i in range(trees))
    model = ForestModel(tuple(fitted), mtry, min_node, seed, len(y), X.shape[1], bootstrap)
    object.__setattr__(model, "oob_masks", model.in_bag() == 0)
    return model


def predict_forest(model: ForestModel, rows) -> np.ndarray:
    return model.predict(rows)


def oob_predictions(model: ForestModel, design) -> tuple[np.ndarray, np.ndarray]:
    """Per training row: mean prediction over trees that did not see it, and that tree count."""
    X, y = (design if isinstance(design, tuple) else (design.X, design.y))
    X = np.asarray(X, dtype=float)
    if len(X) != model.n_train:
        raise ValueError("OOB evaluation needs the training design")
    oob = model.in_bag() == 0
    preds = model.tree_predictions(X)
    n_oob = oob.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(oob, preds, 0.0).sum(axis=0) / n_oob
    return np.where(n_oob > 0, mean, np.nan), n_oob


def oob_error(model: ForestModel, design) -> float:
    y = np.asarray(design[1] if isinstance(design, tuple) else design.y, dtype=float)
    pred, n_oob = oob_predictions(model, design)
    covered = n_oob > 0
    if not covered.any():
        raise ValueError("no training row is out-of-bag for any tree")
    return float(np.mean((pred[covered] - y[covered]) ** 2))


def dumps_forest(model: ForestModel) -> str:
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "seed": model.seed,
        "seed_scheme": "PCG64(SeedSequence(seed, spawn_key=(tree_index,)))",
        "mtry": model.mtry,
        "min_node": model.min_node,
        "n_train": model.n_train,
        "n_features": model.n_features,
        "bootstrap": model.bootstrap,
        "trees": [t.to_dict() for t in model.trees],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def loads_forest(text: str) -> ForestModel:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_TAG or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a version-1 forest model file")
    trees = tuple(RegressionTree.from_dict(d) for d in doc["trees"])
    model = ForestModel(
        trees, doc["mtry"], doc["min_node"], doc["seed"], doc["n_train"], doc["n_features"], doc["bootstrap"]
    )
    object.__setattr__(model, "oob_masks", model.in_bag() == 0)
    return model
