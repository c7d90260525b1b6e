"""Second-order gradient boosting on the logistic loss with L1/L2-regularized leaves."""

import numpy as np

from .base import Classifier, log_loss, register_learner, sigmoid
from .tree import grow_tree, pack_trees, presort, unpack_trees


def soft_threshold(g, alpha):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


class NewtonCriterion:
    """a = hessian, b = gradient.

    Leaf weight is ``-soft(G, alpha) / (H + lambda)``; a split scores
    ``0.5 * [S(G_L)^2/(H_L+l) + S(G_R)^2/(H_R+l) - S(G)^2/(H+l)] - gamma``
    where ``S`` is soft-thresholding by ``alpha`` (plain ``G`` when alpha=0).
    """

    def __init__(self, lam, alpha, gamma, min_child_weight):
        self.lam, self.alpha, self.gamma = lam, alpha, gamma
        self.min_child_weight = min_child_weight

    def _score(self, G, H):
        return soft_threshold(G, self.alpha) ** 2 / (H + self.lam)

    def gains(self, hL, gL, H, G):
        hR, gR = H - hL, G - gL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (self._score(gL, hL) + self._score(gR, hR) - self._score(G, H)) - self.gamma
        valid = (hL >= self.min_child_weight) & (hR >= self.min_child_weight) & np.isfinite(gain)
        return gain, valid

    def leaf_value(self, H, G):
        denom = H + self.lam
        if denom <= 0:
            return 0.0
        return float(-soft_threshold(G, self.alpha) / denom)

    def can_split(self, H, G):
        return H >= 2 * self.min_child_weight


@register_learner("gbt")
class GradientBoostedTrees(Classifier):
    """Boosted regression trees on the logit scale starting from a margin of 0 (p = 0.5).

    ``lambda`` is the L2 leaf penalty, ``alpha`` the L1 penalty and ``gamma``
    the minimum split gain. The score is ``sigmoid(eta * sum of leaf weights)``.
    """

    defaults = {
        "n_rounds": 200,
        "eta": 0.1,
        "lambda": 1.0,
        "alpha": 0.0,
        "max_depth": 4,
        "gamma": 0.0,
        "min_child_weight": 0.0,
    }

    def _fit(self, X, y):
        hp = self.hp
        crit = NewtonCriterion(hp["lambda"], hp["alpha"], hp["gamma"], hp["min_child_weight"])
        order = presort(X)
        margin = np.zeros(len(X))
        self.trees = []
        self.loss_history = [log_loss(y, sigmoid(margin))]
        for _ in range(hp["n_rounds"]):
            p = sigmoid(margin)
            g = p - y
            h = p * (1.0 - p)
            tree = grow_tree(X, h, g, order, crit, hp["max_depth"])
            self.trees.append(tree)
            margin = margin + hp["eta"] * tree.predict_value(X)
            self.loss_history.append(log_loss(y, sigmoid(margin)))

    def decision_function(self, X):
        margin = np.zeros(len(X))
        for t in self.trees:
            margin += self.hp["eta"] * t.predict_value(X)
        return margin

    def _predict(self, X):
        return sigmoid(self.decision_function(X))

    def params(self):
        return pack_trees(self.trees) if self.trees else {"tree_offsets": np.zeros(1, dtype=np.int64)}

    def load_params(self, p):
        self.trees = unpack_trees(p) if len(p["tree_offsets"]) > 1 else []
