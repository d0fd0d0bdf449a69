"""Random forests built from scratch for reproducible importances.

The selection stage needs two quantities per corpus condition: held-out
accuracy and normalized mean-decrease-in-impurity feature importances.
Everything here is bit-reproducible: candidate thresholds are midpoints
between consecutive sorted unique values, and every tie (equal Gini gain,
equal votes) breaks toward the lowest feature index / lowest threshold /
lowest class id. Each tree draws from an independent RNG stream derived
from (seed, tree_index), so serial and parallel training agree exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import FamilyLabelMap, FeatureSchema, LabeledFeatureDataset
from .errors import ValidationError

#: env var bounding tree-training worker threads (default 1 = serial)
THREADS_ENV = "MALFAM_THREADS"

_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: str | int = "sqrt"  # "sqrt" | "all" | fixed k
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_split < 2:
            raise ValidationError(
                f"min_samples_split must be >= 2, got {self.min_samples_split}"
            )
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in ("sqrt", "all"):
                raise ValidationError(
                    f"unknown features_per_split {self.features_per_split!r}"
                )
        elif self.features_per_split < 1:
            raise ValidationError("fixed features_per_split must be >= 1")

    def candidates_per_split(self, dimension: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(math.isqrt(dimension)))
        if self.features_per_split == "all":
            return dimension
        k = int(self.features_per_split)
        if k > dimension:
            raise ValidationError(
                f"features_per_split fixed({k}) exceeds dimension {dimension}"
            )
        return k

    def to_json(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ForestConfig":
        return cls(**obj)


@dataclass
class TreeNode:
    n: int
    impurity: float
    # internal node fields
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    # leaf field: class distribution summing to 1
    dist: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class ImportanceProfile:
    """L1-normalized importances plus the model's held-out accuracy."""

    importances: list[float]
    accuracy: float | None = None

    def __post_init__(self):
        s = sum(self.importances)
        if any(v < 0 for v in self.importances):
            raise ValidationError("importances must be non-negative")
        if s > 0 and abs(s - 1.0) > 1e-9:
            raise ValidationError(f"importances sum to {s!r}, expected 1")


def gini(dist: np.ndarray) -> float:
    """Gini impurity 1 - sum(p^2) of a class distribution (sums to 1)."""
    p = np.asarray(dist, dtype=np.float64)
    return float(1.0 - np.dot(p, p))


def _gini_from_counts(counts: np.ndarray, n: int) -> float:
    p = counts / n
    return float(1.0 - np.dot(p, p))


def _best_split_for_feature(values: np.ndarray, onehot: np.ndarray,
                            parent_gini: float) -> tuple[float, float] | None:
    """Best (gain, threshold) over midpoints of sorted unique values."""
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    v = values[order]
    boundaries = np.nonzero(v[1:] != v[:-1])[0]
    if boundaries.size == 0:
        return None
    prefix = np.cumsum(onehot[order], axis=0)
    total = prefix[-1]
    n_left = (boundaries + 1).astype(np.float64)
    n_right = n - n_left
    c_left = prefix[boundaries]
    c_right = total - c_left
    g_left = 1.0 - np.einsum("ij,ij->i", c_left, c_left) / (n_left**2)
    g_right = 1.0 - np.einsum("ij,ij->i", c_right, c_right) / (n_right**2)
    child = (n_left * g_left + n_right * g_right) / n
    gains = parent_gini - child
    best = int(np.argmax(gains))  # first max -> lowest threshold
    best_gain = float(gains[best])
    if best_gain <= _GAIN_EPS:
        return None
    b = boundaries[best]
    threshold = float((v[b] + v[b + 1]) / 2.0)
    return best_gain, threshold


def _build_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig,
                rng: np.random.Generator, n_classes: int) -> TreeNode:
    dim = X.shape[1]
    k = cfg.candidates_per_split(dim)
    eye = np.eye(n_classes, dtype=np.float64)

    if cfg.bootstrap:
        rows = rng.integers(0, X.shape[0], X.shape[0])
    else:
        rows = np.arange(X.shape[0])
    Xb, yb = X[rows], y[rows]

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        n = idx.shape[0]
        counts = np.bincount(yb[idx], minlength=n_classes).astype(np.float64)
        impurity = _gini_from_counts(counts, n)
        node = TreeNode(n=n, impurity=impurity)

        splittable = (
            n >= cfg.min_samples_split
            and impurity > 0.0
            and (cfg.max_depth is None or depth < cfg.max_depth)
        )
        if splittable:
            if k == dim:
                candidates = np.arange(dim)
            else:
                candidates = np.sort(rng.choice(dim, size=k, replace=False))
            onehot = eye[yb[idx]]
            best: tuple[float, int, float] | None = None
            for f in candidates:
                found = _best_split_for_feature(Xb[idx, f], onehot, impurity)
                if found is None:
                    continue
                gain, threshold = found
                # strict improvement keeps lowest feature index on ties
                if best is None or gain > best[0]:
                    best = (gain, int(f), threshold)
            if best is not None:
                _, node.feature, node.threshold = best
                mask = Xb[idx, node.feature] <= node.threshold
                node.left = grow(idx[mask], depth + 1)
                node.right = grow(idx[~mask], depth + 1)
                return node

        node.dist = counts / n
        return node

    return grow(np.arange(Xb.shape[0]), 0)


@dataclass
class ForestModel:
    trees: list[TreeNode]
    schema: FeatureSchema
    classes: FamilyLabelMap
    config: ForestConfig
    train_rows: int = 0

    @property
    def n_classes(self) -> int:
        return self.classes.n_classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority vote over trees; ties go to the lowest class id."""
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        idx_all = np.arange(X.shape[0])
        for tree in self.trees:
            preds = np.empty(X.shape[0], dtype=np.int64)

            def route(node: TreeNode, idx: np.ndarray) -> None:
                if node.is_leaf:
                    preds[idx] = int(np.argmax(node.dist))
                    return
                mask = X[idx, node.feature] <= node.threshold
                route(node.left, idx[mask])
                route(node.right, idx[~mask])

            route(tree, idx_all)
            votes[idx_all, preds] += 1
        return np.argmax(votes, axis=1)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "config": self.config.to_json(),
            "schema": {
                "names": list(self.schema.names),
                "kinds": list(self.schema.kinds),
            },
            "classes": self.classes.to_json(),
            "train_rows": self.train_rows,
            "trees": [_node_to_json(t) for t in self.trees],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ForestModel":
        if obj.get("version") != 1:
            raise ValidationError(f"unsupported forest version {obj.get('version')}")
        schema = FeatureSchema(
            tuple(obj["schema"]["names"]), tuple(obj["schema"]["kinds"])
        )
        classes = FamilyLabelMap.from_json(obj["classes"])
        return cls(
            trees=[_node_from_json(t) for t in obj["trees"]],
            schema=schema,
            classes=classes,
            config=ForestConfig.from_json(obj["config"]),
            train_rows=obj["train_rows"],
        )


def _node_to_json(node: TreeNode) -> dict:
    if node.is_leaf:
        return {
            "n": node.n,
            "impurity": node.impurity,
            "dist": [float(v) for v in node.dist],
        }
    return {
        "n": node.n,
        "impurity": node.impurity,
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }


def _node_from_json(obj: dict) -> TreeNode:
    if "dist" in obj:
        return TreeNode(
            n=obj["n"],
            impurity=obj["impurity"],
            dist=np.array(obj["dist"], dtype=np.float64),
        )
    return TreeNode(
        n=obj["n"],
        impurity=obj["impurity"],
        feature=obj["feature"],
        threshold=obj["threshold"],
        left=_node_from_json(obj["left"]),
        right=_node_from_json(obj["right"]),
    )


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def train_forest(train: LabeledFeatureDataset, cfg: ForestConfig,
                 classes: FamilyLabelMap | None = None) -> ForestModel:
    """Train a forest; deterministic for a fixed (dataset, cfg.seed).

    Single-class datasets yield a constant model. Set the MALFAM_THREADS
    env var to train trees in parallel; results match the serial run
    bit-for-bit because each tree owns its RNG stream.
    """
    if train.n_rows == 0:
        raise ValidationError("cannot train on an empty dataset")
    if classes is None:
        n_classes = int(train.y.max()) + 1
        classes = FamilyLabelMap(tuple(f"class{int(c)}" for c in range(n_classes)))
    cfg.candidates_per_split(train.schema.dimension)  # validate fixed k

    def build(t: int) -> TreeNode:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(t,))
        )
        return _build_tree(train.X, train.y, cfg, rng, classes.n_classes)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(build, range(cfg.n_trees)))
    else:
        trees = [build(t) for t in range(cfg.n_trees)]
    return ForestModel(
        trees=trees,
        schema=train.schema,
        classes=classes,
        config=cfg,
        train_rows=train.n_rows,
    )


def evaluate_accuracy(model: ForestModel, test: LabeledFeatureDataset) -> float:
    if test.schema != model.schema:
        raise ValidationError("test schema does not match the model schema")
    if test.n_rows == 0:
        raise ValidationError("cannot evaluate accuracy on an empty test set")
    preds = model.predict(test.X)
    return float(np.mean(preds == test.y))


def feature_importances(model: ForestModel) -> ImportanceProfile:
    """Mean-decrease-in-impurity importances, L1-normalized.

    Per tree, each internal node credits its split feature with the Gini
    decrease weighted by the node's sample fraction; tree vectors are
    averaged and the result normalized to sum 1 (all-zero stays all-zero
    when no tree made a split).
    """
    dim = model.schema.dimension
    acc = np.zeros(dim, dtype=np.float64)
    for tree in model.trees:
        vec = np.zeros(dim, dtype=np.float64)
        root_n = tree.n

        def walk(node: TreeNode) -> None:
            if node.is_leaf:
                return
            child = (
                node.left.n * node.left.impurity
                + node.right.n * node.right.impurity
            ) / node.n
            vec[node.feature] += (node.n / root_n) * (node.impurity - child)
            walk(node.left)
            walk(node.right)

        walk(tree)
        acc += vec
    acc /= len(model.trees)
    total = float(acc.sum())
    if total > 0:
        acc = acc / total
    return ImportanceProfile(importances=[float(v) for v in acc])
