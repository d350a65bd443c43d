"""Small gradient-boosted decision-tree classifier (logistic loss).

Deterministic exact greedy splits; depth and tree count are kept low since
the feature space is tiny. Serializes to plain JSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 0.0

    def is_leaf(self) -> bool:
        return self.left is None

    def predict(self, x: np.ndarray) -> float:
        node = self
        while not node.is_leaf():
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    def to_json(self):
        if self.is_leaf():
            return {"value": self.value}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_json(), "right": self.right.to_json()}

    @staticmethod
    def from_json(d):
        if "value" in d:
            return _Node(value=d["value"])
        return _Node(feature=d["feature"], threshold=d["threshold"],
                     left=_Node.from_json(d["left"]),
                     right=_Node.from_json(d["right"]))


def _fit_tree(x, grad, hess, depth, min_leaf, reg):
    node = _Node()
    node.value = -grad.sum() / (hess.sum() + reg)
    if depth == 0 or len(grad) < 2 * min_leaf:
        return node
    best_gain = 1e-12
    best = None
    parent_score = grad.sum() ** 2 / (hess.sum() + reg)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        gs = np.cumsum(grad[order])
        hs = np.cumsum(hess[order])
        g_tot, h_tot = gs[-1], hs[-1]
        for i in range(min_leaf - 1, len(xs) - min_leaf):
            if xs[i] == xs[i + 1]:
                continue
            gl, hl = gs[i], hs[i]
            gain = (gl ** 2 / (hl + reg)
                    + (g_tot - gl) ** 2 / (h_tot - hl + reg)
                    - parent_score)
            if gain > best_gain:
                best_gain = gain
                best = (f, (xs[i] + xs[i + 1]) / 2.0)
    if best is None:
        return node
    f, thr = best
    mask = x[:, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _fit_tree(x[mask], grad[mask], hess[mask], depth - 1, min_leaf, reg)
    node.right = _fit_tree(x[~mask], grad[~mask], hess[~mask], depth - 1, min_leaf, reg)
    return node


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35, 35)))


@dataclass
class GradientBoostedClassifier:
    n_trees: int = 60
    max_depth: int = 3
    learning_rate: float = 0.15
    min_leaf: int = 8
    reg: float = 1.0
    base_score: float = 0.0
    trees: list = field(default_factory=list)

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GradientBoostedClassifier":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(set(y.tolist())) < 2:
            raise ValueError("training data must contain both classes")
        p0 = min(max(y.mean(), 1e-6), 1 - 1e-6)
        self.base_score = float(np.log(p0 / (1 - p0)))
        self.trees = []
        f = np.full(len(y), self.base_score)
        for _ in range(self.n_trees):
            p = _sigmoid(f)
            grad = p - y
            hess = p * (1 - p)
            tree = _fit_tree(x, grad, hess, self.max_depth, self.min_leaf, self.reg)
            self.trees.append(tree)
            f += self.learning_rate * np.array([tree.predict(row) for row in x])
        return self

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            f += self.learning_rate * np.array([tree.predict(row) for row in x])
        return f

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision(x))

    def to_json(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "min_leaf": self.min_leaf,
                "reg": self.reg, "base_score": self.base_score,
                "trees": [t.to_json() for t in self.trees]}

    @staticmethod
    def from_json(d: dict) -> "GradientBoostedClassifier":
        m = GradientBoostedClassifier(
            n_trees=d["n_trees"], max_depth=d["max_depth"],
            learning_rate=d["learning_rate"], min_leaf=d["min_leaf"],
            reg=d["reg"], base_score=d["base_score"])
        m.trees = [_Node.from_json(t) for t in d["trees"]]
        return m


def roc_auc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC; ties share credit."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=float)
    pos = s[y == 1]
    neg = s[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUC needs both classes")
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return float(wins / (len(pos) * len(neg)))
