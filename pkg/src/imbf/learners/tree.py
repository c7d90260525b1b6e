"""Axis-aligned binary trees: a presorted exact-greedy grower, CART and random forests.

The grower is shared with gradient boosting. Every row carries two additive
statistics ``(a, b)``. CART uses (sample weight, weighted positives); boosting
uses (hessian, gradient). A ``criterion`` object turns left/right sums into
split gains and leaf values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeding import derive_seed
from .base import Classifier, register_learner


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row (``x <= threshold`` goes left)."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always follow parents
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


class GiniCriterion:
    """a = sample weight, b = weighted positive count."""

    def __init__(self, min_leaf=1):
        self.min_leaf = min_leaf

    def gains(self, aL, bL, A, B):
        aR, bR = A - aL, B - bL
        parent = 2.0 * B * (A - B) / A
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(aL > 0, 2.0 * bL * (aL - bL) / aL, 0.0)
            right = np.where(aR > 0, 2.0 * bR * (aR - bR) / aR, 0.0)
        valid = (aL >= self.min_leaf) & (aR >= self.min_leaf)
        return (parent - left - right) / A, valid

    def leaf_value(self, A, B):
        return B / A

    def can_split(self, A, B):
        return A >= 2 * self.min_leaf and 0 < B < A


def gini(labels) -> float:
    """Gini impurity 1 - sum_c p_c^2 of a label vector."""
    y = np.asarray(labels)
    if len(y) == 0:
        return 0.0
    p = y.mean()
    return float(1.0 - p * p - (1 - p) * (1 - p))


def grow_tree(X, a, b, sorted_idx, criterion, max_depth, rng=None, max_features=None) -> Tree:
    """Exact-greedy tree growth.

    ``sorted_idx`` is a (d, n) array: for each feature, the participating rows
    ordered by that feature's value. Ties between candidate splits go to the
    lowest feature index, then the lowest threshold.
    """
    d = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []
    goes_left = np.zeros(len(X), dtype=bool)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(S, depth):
        node = new_node()
        rows = S[0]
        A, B = a[rows].sum(), b[rows].sum()
        value[node] = criterion.leaf_value(A, B)
        if depth >= max_depth or len(rows) < 2 or not criterion.can_split(A, B):
            return node
        if max_features is not None and max_features < d:
            fs = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            fs = np.arange(d)
        Sf = S[fs]
        V = X[Sf, fs[:, None]]
        aL = np.cumsum(a[Sf], axis=1)[:, :-1]
        bL = np.cumsum(b[Sf], axis=1)[:, :-1]
        gain, valid = criterion.gains(aL, bL, A, B)
        valid &= V[:, :-1] < V[:, 1:]
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        fi, pos = divmod(flat, gain.shape[1])
        if not gain[fi, pos] > 0:
            return node
        f = int(fs[fi])
        lo, hi = V[fi, pos], V[fi, pos + 1]
        thr = lo + (hi - lo) / 2.0
        if not lo <= thr < hi:
            thr = lo
        goes_left[rows] = X[rows, f] <= thr
        M = goes_left[S]
        n_left = int(M[0].sum())
        SL = S[M].reshape(len(S), n_left)
        SR = S[~M].reshape(len(S), len(rows) - n_left)
        goes_left[rows] = False
        feature[node] = f
        threshold[node] = float(thr)
        left[node] = build(SL, depth + 1)
        right[node] = build(SR, depth + 1)
        return node

    build(sorted_idx, 0)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


def presort(X, rows=None) -> np.ndarray:
    """Per-feature stable ordering of ``rows`` (default: all rows)."""
    if rows is None:
        rows = np.arange(len(X))
    order = np.argsort(X[rows], axis=0, kind="stable").T
    return rows[order]


# tree sets are flattened into parallel arrays plus per-tree offsets
def pack_trees(trees) -> dict:
    sizes = [t.n_nodes for t in trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return {
        "tree_offsets": offsets,
        "feature": np.concatenate([t.feature for t in trees]),
        "threshold": np.concatenate([t.threshold for t in trees]),
        "left": np.concatenate([t.left for t in trees]),
        "right": np.concatenate([t.right for t in trees]),
        "value": np.concatenate([t.value for t in trees]),
    }


def unpack_trees(p) -> list:
    off = p["tree_offsets"]
    out = []
    for i in range(len(off) - 1):
        s = slice(off[i], off[i + 1])
        out.append(Tree(
            np.asarray(p["feature"][s], dtype=np.int64),
            np.asarray(p["threshold"][s], dtype=np.float64),
            np.asarray(p["left"][s], dtype=np.int64),
            np.asarray(p["right"][s], dtype=np.int64),
            np.asarray(p["value"][s], dtype=np.float64),
        ))
    return out


@register_learner("decision_tree")
class DecisionTree(Classifier):
    """CART with Gini impurity; the score is the positive fraction of the leaf."""

    defaults = {"max_depth": 8, "min_leaf": 5}

    def _fit(self, X, y):
        w = np.ones(len(X))
        self.tree = grow_tree(X, w, y * w, presort(X), GiniCriterion(self.hp["min_leaf"]), self.hp["max_depth"])

    def _predict(self, X):
        return self.tree.predict_value(X)

    def params(self):
        return pack_trees([self.tree])

    def load_params(self, p):
        self.tree = unpack_trees(p)[0]


def _max_features(spec, d):
    if spec in (None, "all"):
        return d
    if spec == "sqrt":
        return max(1, int(math.sqrt(d)))
    if spec == "log2":
        return max(1, int(math.log2(d)))
    return max(1, min(d, int(round(float(spec) * d))))


@register_learner("random_forest")
class RandomForest(Classifier):
    """Bagged CART trees with per-split feature subsampling; the score is the vote share."""

    defaults = {"n_trees": 100, "max_depth": 8, "min_leaf": 5, "feat_frac": "sqrt", "bootstrap": True}

    def _fit(self, X, y):
        n, d = X.shape
        m = _max_features(self.hp["feat_frac"], d)
        crit = GiniCriterion(self.hp["min_leaf"])
        full_order = presort(X)
        self.trees = []
        for t in range(self.hp["n_trees"]):
            rng = np.random.default_rng(derive_seed(self.seed, "tree", t))
            if self.hp["bootstrap"]:
                w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
                S = full_order[w[full_order] > 0].reshape(d, -1)
            else:
                w = np.ones(n)
                S = full_order
            self.trees.append(grow_tree(X, w, w * y, S, crit, self.hp["max_depth"], rng, m))

    def _predict(self, X):
        votes = np.zeros(len(X))
        for t in self.trees:
            votes += t.predict_value(X) >= 0.5
        return votes / len(self.trees)

    def params(self):
        return pack_trees(self.trees)

    def load_params(self, p):
        self.trees = unpack_trees(p)
