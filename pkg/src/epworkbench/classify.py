"""CART trees, bagged ensembles, stratified cross-validation and forward feature selection.

Binary labels: 1 is the positive class (cbx), 0 the negative (control).
Splits minimise weighted Gini impurity at midpoints between consecutive
distinct values; ties go to the lowest feature index, then the lowest
threshold.  Leaf and vote ties resolve to the negative class.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .io import write_csv
from .rng import substream

MODEL_FORMAT = "epworkbench-bagged-trees"


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=int)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on the number of rows")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self) -> int:
        return self.y.size

    def columns(self, idx: Sequence[int]) -> "LabeledDataset":
        idx = list(idx)
        return LabeledDataset(self.X[:, idx], self.y, tuple(self.feature_names[i] for i in idx))


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf predicting ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    min_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            go_left = X[rows[inner], f[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for k in range(self.n_nodes):
            if self.feature[k] < 0:
                nodes.append({"leaf": int(self.value[k]), "n": float(self.n_samples[k])})
            else:
                nodes.append({"feature": int(self.feature[k]), "threshold": float(self.threshold[k]),
                              "left": int(self.left[k]), "right": int(self.right[k]),
                              "n": float(self.n_samples[k])})
        return {"min_leaf": self.min_leaf, "nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        nodes = doc["nodes"]
        feat = np.array([n.get("feature", -1) for n in nodes], dtype=int)
        return cls(feat,
                   np.array([n.get("threshold", np.nan) for n in nodes], dtype=float),
                   np.array([n.get("left", -1) for n in nodes], dtype=int),
                   np.array([n.get("right", -1) for n in nodes], dtype=int),
                   np.array([n.get("leaf", 0) for n in nodes], dtype=int),
                   np.array([n["n"] for n in nodes], dtype=float),
                   doc.get("min_leaf", 1))


# Impurities within this fraction of the node weight count as equal, so
# tie-breaking does not depend on floating-point summation order.
_TIE_RTOL = 1e-10


def _best_split(X, y, w, min_leaf):
    """Lowest-impurity admissible split of one node, or None.

    Returns ``(feature, threshold, w_left, pos_left)``.  Ties go to the
    lowest feature index, then the lowest threshold.
    """
    n, nf = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = X[order, np.arange(nf)]
    ws = w[order]
    wl = np.cumsum(ws, axis=0)[:-1]
    pl = np.cumsum(ws * y[order], axis=0)[:-1]
    wt = wl[-1, 0] + ws[-1, 0]
    pt = pl[-1, 0] + ws[-1, 0] * y[order[-1, 0]]
    wr, pr = wt - wl, pt - pl
    valid = (xs[1:] > xs[:-1]) & (wl >= min_leaf) & (wr >= min_leaf)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        # proportional to the weighted child Gini impurity
        imp = pl * (wl - pl) / wl + pr * (wr - pr) / wr
    imp = np.where(valid, imp, np.inf).T
    ks = np.flatnonzero(imp.ravel() <= imp.min() + _TIE_RTOL * wt)
    f, k = divmod(int(ks[0]), n - 1)
    return f, 0.5 * (xs[k, f] + xs[k + 1, f]), wl[k, f], pl[k, f]


def train_tree(X, y, min_leaf: int = 1, sample_weight=None) -> DecisionTree:
    """Greedy CART growth until nodes are pure, unsplittable, or at ``min_leaf``.

    ``sample_weight`` holds integer multiplicities (bootstrap counts); a
    weighted row counts as that many samples for ``min_leaf``.  The two
    children of a node get consecutive ids when it is split.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        raise ValueError("cannot train a tree on empty data")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    w = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(wt, pos):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(int(pos > wt - pos))  # ties go to the negative class
        count.append(wt)
        return len(feature) - 1

    wt, pos = float(w.sum()), float(w @ y)
    stack = [(new_node(wt, pos), np.arange(y.size), wt, pos)]
    while stack:
        node, idx, wt, pos = stack.pop()
        if pos == 0 or pos == wt or wt < 2 * min_leaf:
            continue
        split = _best_split(X[idx], y[idx], w[idx], min_leaf)
        if split is None:
            continue
        f, t, wl, pl = split
        mask = X[idx, f] <= t
        feature[node], threshold[node] = f, t
        left[node] = new_node(wl, pl)
        right[node] = new_node(wt - wl, pos - pl)
        stack.append((right[node], idx[~mask], wt - wl, pos - pl))
        stack.append((left[node], idx[mask], wl, pl))
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left),
                        np.array(right), np.array(value), np.array(count), min_leaf)


@dataclass
class BaggedEnsemble:
    trees: list[DecisionTree]
    seed: int
    min_leaf: int = 1
    feature_names: tuple[str, ...] = ()
    registry_version: str | None = None

    def vote_fraction(self, X) -> np.ndarray:
        """Fraction of trees voting for the positive class."""
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        votes = np.sum([t.predict(X) for t in self.trees], axis=0)
        return (2 * votes > len(self.trees)).astype(int)

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": 1,
            "seed": self.seed,
            "min_leaf": self.min_leaf,
            "n_trees": len(self.trees),
            "feature_names": list(self.feature_names),
            "registry_version": self.registry_version,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BaggedEnsemble":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a bagged-tree model document")
        return cls([DecisionTree.from_dict(t) for t in doc["trees"]], doc["seed"],
                   doc["min_leaf"], tuple(doc["feature_names"]), doc.get("registry_version"))


def bootstrap_counts(n: int, seed: int, tree: int) -> np.ndarray:
    rng = substream(seed, tree)
    return np.bincount(rng.integers(0, n, size=n), minlength=n)


def _train_bootstrap(tree_idx, X, y, min_leaf, seed):
    counts = bootstrap_counts(y.size, seed, tree_idx)
    keep = counts > 0
    return train_tree(X[keep], y[keep], min_leaf, counts[keep])


def bagging_train(data: LabeledDataset, n_trees: int = 30, min_leaf: int = 1, seed: int = 0,
                  workers: int = 1) -> BaggedEnsemble:
    """Train ``n_trees`` trees on bootstrap resamples of size ``len(data)``; tree ``t`` uses substream ``(seed, t)``."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if len(data) == 0:
        raise ValueError("cannot train on empty data")
    job = partial(_train_bootstrap, X=data.X, y=data.y, min_leaf=min_leaf, seed=seed)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            trees = list(pool.map(job, range(n_trees)))
    else:
        trees = [job(t) for t in range(n_trees)]
    return BaggedEnsemble(trees, seed, min_leaf, data.feature_names)


@dataclass(frozen=True)
class ClassificationReport:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ClassificationReport":
        t = np.asarray(y_true, dtype=int)
        p = np.asarray(y_pred, dtype=int)
        return cls(int(np.sum((t == 1) & (p == 1))), int(np.sum((t == 0) & (p == 1))),
                   int(np.sum((t == 0) & (p == 0))), int(np.sum((t == 1) & (p == 0))))

    @staticmethod
    def _ratio(a, b) -> float:
        return a / b if b else 0.0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def sensitivity(self) -> float:
        return self._ratio(self.tp, self.tp + self.fn)

    @property
    def specificity(self) -> float:
        return self._ratio(self.tn, self.tn + self.fp)

    @property
    def ppv(self) -> float:
        return self._ratio(self.tp, self.tp + self.fp)

    @property
    def npv(self) -> float:
        return self._ratio(self.tn, self.tn + self.fn)

    @property
    def error_rate(self) -> float:
        return self._ratio(self.fp + self.fn, self.total)

    @property
    def accuracy(self) -> float:
        return 1.0 - self.error_rate if self.total else 0.0

    def as_row(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "sensitivity": self.sensitivity, "specificity": self.specificity,
                "ppv": self.ppv, "npv": self.npv, "error_rate": self.error_rate}

    def confusion_text(self, negative: str = "control", positive: str = "cbx") -> str:
        w = max(len(negative), len(positive), 9)
        corner = "true \\ pred"
        lines = [
            f"{corner:>{w + 2}} {negative:>{w}} {positive:>{w}}",
            f"{negative:>{w + 2}} {self.tn:>{w}} {self.fp:>{w}}",
            f"{positive:>{w + 2}} {self.fn:>{w}} {self.tp:>{w}}",
        ]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> Path:
        row = self.as_row()
        return write_csv(path, tuple(row), [tuple(row.values())])


def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Fold index per row; each class is shuffled then dealt round-robin."""
    y = np.asarray(y, dtype=int)
    fold = np.empty(y.size, dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if 0 < idx.size < k:
            raise ValueError(f"class {cls} has {idx.size} rows; need >= {k} for {k}-fold CV")
        idx = substream(seed, 10_000 + cls).permutation(idx)
        fold[idx] = np.arange(idx.size) % k
    return fold


Trainer = Callable[[LabeledDataset], object]


def kfold_cv(data: LabeledDataset, k: int = 10, trainer: Trainer | None = None,
             seed: int = 0) -> ClassificationReport:
    """Pooled held-out confusion counts over stratified folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    trainer = trainer or partial(bagging_train, n_trees=30, min_leaf=1, seed=seed)
    fold = stratified_folds(data.y, k, seed)
    pred = np.empty(len(data), dtype=int)
    for f in range(k):
        test = fold == f
        model = trainer(LabeledDataset(data.X[~test], data.y[~test], data.feature_names))
        pred[test] = model.predict(data.X[test])
    return ClassificationReport.from_predictions(data.y, pred)


@dataclass
class SFSResult:
    selected: list[int]
    trace: list[tuple[int, float]] = field(default_factory=list)

    def names(self, data: LabeledDataset) -> list[str]:
        return [data.feature_names[i] for i in self.selected]


def _cv_accuracy(subset, data, k, n_trees, min_leaf, seed):
    sub = data.columns(subset)
    trainer = partial(bagging_train, n_trees=n_trees, min_leaf=min_leaf, seed=seed)
    return kfold_cv(sub, k, trainer, seed).accuracy


def sfs(data: LabeledDataset, candidates: Sequence[int] | None = None, k: int = 10,
        n_trees: int = 30, min_leaf: int = 1, seed: int = 0, workers: int = 1) -> SFSResult:
    """Sequential forward selection on k-fold CV accuracy of the bagged ensemble.

    Adds the best remaining candidate while it strictly improves accuracy;
    ties go to the lower feature index.
    """
    remaining = list(range(data.X.shape[1])) if candidates is None else list(candidates)
    if not remaining:
        raise ValueError("need at least one candidate feature")
    result = SFSResult([])
    best = -np.inf
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while remaining:
            subsets = [result.selected + [c] for c in remaining]
            job = partial(_cv_accuracy, data=data, k=k, n_trees=n_trees, min_leaf=min_leaf, seed=seed)
            scores = list(pool.map(job, subsets)) if pool else [job(s) for s in subsets]
            i = int(np.argmax(scores))
            if not scores[i] > best:
                break
            best = scores[i]
            result.selected.append(remaining.pop(i))
            result.trace.append((result.selected[-1], float(best)))
    finally:
        if pool:
            pool.shutdown()
    return result
