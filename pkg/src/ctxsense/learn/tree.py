"""CART-style classification tree with Gini impurity splits.

Leaves keep their class frequencies so the tree yields a distribution
rather than a hard label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..categories import ClassPosterior
from ..errors import PreconditionError, SchemaError, TrainingError

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """Internal nodes send ``x[feature] <= threshold`` left; leaves have ``dist``."""

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    dist: Optional[tuple[float, ...]] = None
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.dist is not None


@dataclass(frozen=True, eq=False)
class DecisionTreeModel:
    classes: tuple[str, ...]
    feature_names: tuple[str, ...]
    nodes: tuple[TreeNode, ...]
    max_depth: int
    min_leaf: int

    def __post_init__(self):
        d = len(self.feature_names)
        for node in self.nodes:
            if node.is_leaf:
                if abs(sum(node.dist) - 1.0) > 1e-9:
                    raise SchemaError("leaf distribution does not sum to 1")
            elif not 0 <= node.feature < d:
                raise SchemaError(f"split on unknown feature index {node.feature}")

    @property
    def depth(self) -> int:
        def walk(k):
            node = self.nodes[k]
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))
        return walk(0)

    def leaf_index(self, x) -> int:
        k = 0
        while not self.nodes[k].is_leaf:
            node = self.nodes[k]
            k = node.left if x[node.feature] <= node.threshold else node.right
        return k

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return np.array([self.nodes[self.leaf_index(x)].dist for x in X], dtype=float)

    def posterior(self, x) -> ClassPosterior:
        return ClassPosterior(self.classes, self.predict_proba(_values(x))[0])

    def predict(self, X) -> list[str]:
        return [self.classes[k] for k in np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self):
        nodes = []
        for n in self.nodes:
            if n.is_leaf:
                nodes.append({"leaf": list(n.dist), "n": n.n_samples})
            else:
                nodes.append({"feature": n.feature, "threshold": n.threshold,
                              "left": n.left, "right": n.right, "n": n.n_samples})
        return {"type": "cart", "classes": list(self.classes),
                "features": list(self.feature_names), "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "nodes": nodes}

    @classmethod
    def from_dict(cls, d):
        nodes = []
        for n in d["nodes"]:
            if "leaf" in n:
                nodes.append(TreeNode(dist=tuple(float(v) for v in n["leaf"]),
                                      n_samples=n["n"]))
            else:
                nodes.append(TreeNode(n["feature"], float(n["threshold"]), n["left"],
                                      n["right"], n_samples=n["n"]))
        return cls(tuple(d["classes"]), tuple(d["features"]), tuple(nodes),
                   d["max_depth"], d["min_leaf"])


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=float)


def gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _best_split(X, y, L, min_leaf):
    """Lowest weighted child impurity over all features and midpoints."""
    n = len(y)
    best = (np.inf, -1, 0.0)
    onehot = np.eye(L)[y]
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not np.any(valid):
            continue
        right_counts = left_counts[-1] + onehot[order[-1]] - left_counts
        nl = n_left[:, None].astype(float)
        nr = (n - n_left)[:, None].astype(float)
        g_left = 1.0 - np.sum((left_counts / nl) ** 2, axis=1)
        g_right = 1.0 - np.sum((right_counts / nr) ** 2, axis=1)
        score = (nl[:, 0] * g_left + nr[:, 0] * g_right) / n
        score[~valid] = np.inf
        k = int(np.argmin(score))
        if score[k] < best[0]:
            thr = 0.5 * (xs[k] + xs[k + 1])
            if thr >= xs[k + 1]:  # adjacent floats
                thr = xs[k]
            best = (float(score[k]), f, float(thr))
    return best


def train_tree(X, labels: Sequence[str], classes: Optional[Sequence[str]] = None,
               feature_names: Optional[Sequence[str]] = None, max_depth: int = 8,
               min_leaf: int = 1) -> DecisionTreeModel:
    """Grow a tree greedily, splitting at midpoints between sorted unique values.

    Ties between candidate splits go to the lower feature index, then the
    lower threshold, so the result depends only on the data and its order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = [str(v) for v in labels]
    if classes is None:
        classes = sorted(set(labels))
    classes = tuple(classes)
    missing = [c for c in classes if c not in labels]
    if missing:
        raise TrainingError(f"no training examples for: {', '.join(missing)}")
    if len(classes) < 2:
        raise PreconditionError("at least two classes are required")
    if max_depth < 0 or min_leaf < 1:
        raise PreconditionError("max_depth must be >= 0 and min_leaf >= 1")
    if feature_names is None:
        feature_names = tuple(f"x{k}" for k in range(X.shape[1]))
    L = len(classes)
    y = np.array([classes.index(v) for v in labels])

    nodes: list[Optional[TreeNode]] = []

    def grow(idx, depth):
        k = len(nodes)
        nodes.append(None)
        counts = np.bincount(y[idx], minlength=L).astype(float)
        parent = gini(counts)
        split = None
        if depth < max_depth and parent > 0 and len(idx) >= 2 * min_leaf:
            score, f, thr = _best_split(X[idx], y[idx], L, min_leaf)
            if f >= 0 and score < parent - _MIN_GAIN:
                split = (f, thr)
        if split is None:
            nodes[k] = TreeNode(dist=tuple((counts / counts.sum()).tolist()),
                                n_samples=len(idx))
            return k
        f, thr = split
        go_left = X[idx, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[k] = TreeNode(f, float(thr), left, right, n_samples=len(idx))
        return k

    grow(np.arange(len(y)), 0)
    return DecisionTreeModel(classes, tuple(feature_names), tuple(nodes), max_depth, min_leaf)


def tree_classify(model: DecisionTreeModel, x) -> ClassPosterior:
    return model.posterior(x)
