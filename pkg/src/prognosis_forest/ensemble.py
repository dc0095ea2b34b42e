"""Decision trees, Random Forests and Extra Trees grown from scratch.

Leaves keep the training class counts; a tree's probability for a class is
the class share at the leaf, and an ensemble averages its trees.
"""

from __future__ import annotations

import json
import math
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .datasets import ALIVE, DEAD, Dataset

FORMAT_VERSION = 1

RF = "RF"
ET = "ET"
IMPUTATIONS = ("mean", "median", "constant")
MISSING_CONSTANT = -1.0


class FitError(ValueError):
    """Training data cannot produce a model (e.g. a single class)."""


@dataclass(frozen=True)
class HyperConfig:
    ensemble_kind: str = RF
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: int = 1
    bootstrap: bool = True
    imputation: str = "mean"
    split_measure: str = "gini"
    seed: int = 0

    def __post_init__(self):
        if self.ensemble_kind not in (RF, ET):
            raise ValueError(f"ensemble_kind must be RF or ET, got {self.ensemble_kind!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.imputation not in IMPUTATIONS:
            raise ValueError(f"imputation must be one of {IMPUTATIONS}")
        if self.split_measure != "gini":
            raise ValueError("only the gini split measure is supported")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        return cls(**d)

    @property
    def tag(self) -> str:
        return self.ensemble_kind


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    cut: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2): alive, dead

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        offsets = np.array([0, self.n_nodes], dtype=np.int64)
        return K.forest_leaves(
            np.ascontiguousarray(X, dtype=np.float64),
            self.feature, self.cut, self.left, self.right, offsets,
        )[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        leaves = self.apply(X)
        return np.column_stack(
            [leaf_probability(self.counts[leaves], ALIVE), leaf_probability(self.counts[leaves], DEAD)]
        )

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if not self.is_leaf(node):
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def to_dict(self) -> dict:
        def build(node: int) -> dict:
            if self.is_leaf(node):
                return {"counts": [int(self.counts[node, 0]), int(self.counts[node, 1])]}
            return {
                "feature": int(self.feature[node]),
                "cut": float(self.cut[node]),
                "left": build(int(self.left[node])),
                "right": build(int(self.right[node])),
            }

        with _deep_recursion():
            return build(0)

    @classmethod
    def from_dict(cls, root: dict) -> "Tree":
        feature, cut, left, right, counts = [], [], [], [], []
        stack = [(root, -1, 0)]
        while stack:
            node, parent, side = stack.pop()
            i = len(feature)
            if parent >= 0:
                (left if side == 0 else right)[parent] = i
            if "counts" in node:
                a, d = node["counts"]
                if a < 0 or d < 0 or a + d < 1:
                    raise ValueError("leaf counts must be >= 0 with a positive sum")
                feature.append(-1)
                cut.append(0.0)
                counts.append((a, d))
            else:
                feature.append(int(node["feature"]))
                cut.append(float(node["cut"]))
                counts.append((0, 0))
            left.append(-1)
            right.append(-1)
            if "counts" not in node:
                stack.append((node["right"], i, 1))
                stack.append((node["left"], i, 0))
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(cut, dtype=np.float64),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(counts, dtype=np.int64).reshape(-1, 2),
        )


@contextmanager
def _deep_recursion(limit: int = 20000):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def leaf_probability(counts, y: int):
    """Share of training samples of class ``y`` at a leaf: TP / (TP + FP)."""
    counts = np.asarray(counts)
    total = counts[..., 0] + counts[..., 1]
    if np.any(total < 1):
        raise ValueError("empty leaf")
    return counts[..., y] / total


@dataclass
class Forest:
    trees: list[Tree]
    hyper: HyperConfig
    feature_names: list[str]
    imputation_values: np.ndarray
    threshold: float | None = None
    provenance: dict = field(default_factory=dict)
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def ensemble_kind(self) -> str:
        return self.hyper.ensemble_kind

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def impute(self, rows) -> np.ndarray:
        X = np.array(rows, dtype=np.float64, ndmin=2)
        if X.shape[1] != self.n_features:
            raise ValueError(f"row width {X.shape[1]} != model width {self.n_features}")
        mask = np.isnan(X)
        if mask.any():
            X[mask] = np.broadcast_to(self.imputation_values, X.shape)[mask]
        return X

    def _flatten(self):
        if self._flat is None:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            counts = np.concatenate([t.counts for t in self.trees])
            leaf = counts.sum(axis=1) > 0
            p_alive = np.zeros(len(counts))
            p_dead = np.zeros(len(counts))
            p_alive[leaf] = leaf_probability(counts[leaf], ALIVE)
            p_dead[leaf] = leaf_probability(counts[leaf], DEAD)
            self._flat = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.cut for t in self.trees]),
                np.concatenate([t.left for t in self.trees]),
                np.concatenate([t.right for t in self.trees]),
                offsets,
                p_alive,
                p_dead,
            )
        return self._flat

    def tree_probas(self, rows) -> np.ndarray:
        """Per-tree (P_alive, P_dead): shape (n_trees, n_rows, 2)."""
        X = self.impute(rows)
        feature, cut, left, right, offsets, p_alive, p_dead = self._flatten()
        leaves = K.forest_leaves(X, feature, cut, left, right, offsets)
        return np.stack([p_alive[leaves], p_dead[leaves]], axis=-1)

    def predict_proba(self, rows) -> np.ndarray:
        """Mean of the per-tree probabilities; columns (P_alive, P_dead)."""
        return self.tree_probas(rows).mean(axis=0)

    def predict(self, rows) -> np.ndarray:
        return labels_from_proba(self.predict_proba(rows))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "ensemble_kind": self.ensemble_kind,
            "hyper": self.hyper.to_dict(),
            "feature_names": list(self.feature_names),
            "imputation_values": [float(v) for v in self.imputation_values],
            "threshold": self.threshold,
            "provenance": self.provenance,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        hyper = HyperConfig.from_dict(d["hyper"])
        if d["ensemble_kind"] != hyper.ensemble_kind:
            raise ValueError("ensemble_kind disagrees with hyper")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            hyper=hyper,
            feature_names=list(d["feature_names"]),
            imputation_values=np.array(d["imputation_values"], dtype=np.float64),
            threshold=d.get("threshold"),
            provenance=d.get("provenance", {}),
        )


def labels_from_proba(proba: np.ndarray) -> np.ndarray:
    """Argmax class; an exact 0.5/0.5 tie goes to dead."""
    proba = np.asarray(proba)
    return np.where(proba[..., DEAD] >= proba[..., ALIVE], DEAD, ALIVE)


def predict_proba(forest: Forest, rows) -> np.ndarray:
    return forest.predict_proba(rows)


def predict_label(forest: Forest, rows) -> np.ndarray:
    return forest.predict(rows)


def save_model(forest: Forest, path: str | Path) -> None:
    with _deep_recursion():
        text = json.dumps(forest.to_dict(), separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Forest:
    with _deep_recursion():
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    return Forest.from_dict(data)


def learn_imputation(X: np.ndarray, strategy: str) -> np.ndarray:
    """Per-column fill values; a column with no observed value gets -1."""
    X = np.asarray(X, dtype=np.float64)
    out = np.full(X.shape[1], MISSING_CONSTANT)
    if strategy == "constant":
        return out
    observed = ~np.isnan(X).all(axis=0)
    if observed.any():
        cols = X[:, observed]
        out[observed] = np.nanmean(cols, axis=0) if strategy == "mean" else np.nanmedian(cols, axis=0)
    return out


def _stream_seeds(seed: int, index: int, n: int = 2) -> list[int]:
    state = np.random.SeedSequence([seed, index]).generate_state(n)
    return [int(s) for s in state]


def fit_arrays(
    X: np.ndarray, y: np.ndarray, hyper: HyperConfig, feature_names: Sequence[str] | None = None
) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FitError("training data must be a non-empty 2-D matrix")
    if len(y) != X.shape[0]:
        raise FitError("labels and rows differ in length")
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise FitError(f"feature width mismatch: {X.shape[1]} columns, {len(names)} names")
    if len(np.unique(y)) < 2:
        raise FitError("training data holds a single class")
    if hyper.max_features > X.shape[1]:
        raise FitError(f"max_features {hyper.max_features} exceeds width {X.shape[1]}")

    fill = learn_imputation(X, hyper.imputation)
    Xf = np.where(np.isnan(X), fill, X)
    Xf = np.ascontiguousarray(Xf)
    codes, uniq, uoff = K.rank_codes(Xf)
    kind = K.KIND_RF if hyper.ensemble_kind == RF else K.KIND_ET
    depth = -1 if hyper.max_depth is None else hyper.max_depth
    n = Xf.shape[0]
    trees = []
    for t in range(hyper.n_trees):
        boot_seed, grow_seed = _stream_seeds(hyper.seed, t)
        idx = K.bootstrap_indices(n, boot_seed) if hyper.bootstrap else np.arange(n, dtype=np.int64)
        arrays = K.grow_tree(
            Xf, codes, uniq, uoff, y, idx, kind, depth,
            hyper.min_samples_leaf, hyper.max_features, grow_seed,
        )
        trees.append(Tree(*arrays))
    return Forest(trees, hyper, names, fill)


def fit(dataset: Dataset, hyper: HyperConfig) -> Forest:
    """Learn imputation values and grow ``hyper.n_trees`` trees on ``dataset``."""
    return fit_arrays(dataset.rows, dataset.labels, hyper, dataset.feature_names)


@dataclass(frozen=True)
class Split:
    feature: int
    cut: float
    impurity: float


def gini_impurity(left_counts, right_counts) -> Fraction:
    """Exact size-weighted Gini impurity of a two-way partition."""
    total = sum(left_counts) + sum(right_counts)
    out = Fraction(0)
    for counts in (left_counts, right_counts):
        n = sum(counts)
        if n:
            g = 1 - sum(Fraction(c, n) ** 2 for c in counts)
            out += Fraction(n, total) * g
    return out


def _split_result(X, y, f, cut) -> Split:
    go_left = X[:, f] <= cut
    lc = (int(np.sum(go_left & (y == ALIVE))), int(np.sum(go_left & (y == DEAD))))
    rc = (int(np.sum(~go_left & (y == ALIVE))), int(np.sum(~go_left & (y == DEAD))))
    return Split(int(f), float(cut), float(gini_impurity(lc, rc)))


def _prepare(rows, labels, candidate_features):
    X = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if candidate_features is None:
        candidate_features = range(X.shape[1])
    feats = np.array(sorted(set(int(f) for f in candidate_features)), dtype=np.int64)
    return X, y, feats, np.arange(X.shape[0], dtype=np.int64)


def best_split_rf(rows, labels, candidate_features=None, min_samples_leaf: int = 1) -> Split | None:
    """Best Gini split over all midpoints of the candidate features.

    Ties go to the lowest feature index, then the lowest cut.  Returns None
    when no admissible split lowers the node impurity.
    """
    X, y, feats, idx = _prepare(rows, labels, candidate_features)
    if len(y) < 2 or len(feats) == 0:
        return None
    codes, uniq, uoff = K.rank_codes(X)
    n = X.shape[0]
    f, cut, _ = K.rf_best_on_features(
        codes, uniq, uoff, y, idx, 0, n, feats, min_samples_leaf,
        np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), np.empty(n, dtype=np.int64),
    )
    return None if f < 0 else _split_result(X, y, f, cut)


def best_split_et(
    rows, labels, candidate_features, rng: np.random.Generator, min_samples_leaf: int = 1
) -> Split | None:
    """One uniform cut per candidate feature, keep the best by Gini.

    Features whose values are all equal offer no cut; None when no
    candidate separates the samples.
    """
    X, y, feats, idx = _prepare(rows, labels, candidate_features)
    if len(y) < 2 or len(feats) == 0:
        return None
    K.seed_stream(int(rng.integers(0, 2**32)))
    f, cut, _ = K.et_best_on_features(X, y, idx, 0, X.shape[0], feats, min_samples_leaf)
    return None if f < 0 else _split_result(X, y, f, cut)


def with_threshold(forest: Forest, threshold: float | None) -> Forest:
    return replace(forest, threshold=threshold, _flat=forest._flat)


def finite_or_none(x: float | None) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)
