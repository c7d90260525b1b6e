"""Linear baselines: L2-regularized logistic regression and a hinge-loss linear SVM."""

import numpy as np

from ..errors import DivergenceError
from .base import Classifier, GradientModel, register_learner, sigmoid


@register_learner("logistic")
class LogisticRegression(GradientModel):
    defaults = {"epochs": 50, "lr": 0.1, "l2": 1e-4, "batch_size": 64}

    def init_params(self, d, rng):
        return {"w": np.zeros(d), "b": np.zeros(1)}

    def forward(self, params, X):
        return sigmoid(X @ params["w"] + params["b"][0])

    def loss_and_grad(self, params, X, y):
        """Mean cross-entropy plus ``l2/2 * ||w||^2`` and its exact gradient."""
        w, b = params["w"], params["b"]
        z = X @ w + b[0]
        # log(1 + e^z) - y z, written to avoid overflow
        loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * self.hp["l2"] * (w @ w)
        r = (sigmoid(z) - y) / len(y)
        return float(loss), {"w": X.T @ r + self.hp["l2"] * w, "b": np.array([r.sum()])}


def fit_logistic_link(margins, y, iters=100):
    """Newton's method for p = sigmoid(a * margin + c), with a tiny ridge for separable data."""
    m = np.asarray(margins, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = np.stack([m, np.ones_like(m)], axis=1)
    theta = np.zeros(2)
    ridge = 1e-6 * len(m)
    for _ in range(iters):
        p = sigmoid(A @ theta)
        g = A.T @ (p - y) + ridge * theta
        H = (A * (p * (1 - p))[:, None]).T @ A + ridge * np.eye(2)
        step = np.linalg.solve(H, g)
        theta -= step
        if np.abs(step).max() < 1e-10:
            break
    return theta


@register_learner("linear_svm")
class LinearSVM(Classifier):
    """Stochastic subgradient descent on ``reg/2 ||w||^2 + mean(max(0, 1 - t f(x)))``.

    Margins are mapped into [0, 1] with a one-dimensional logistic link fitted
    on the training margins.
    """

    defaults = {"epochs": 30, "lr": 0.01, "reg": 1e-4, "batch_size": 64}

    def _fit(self, X, y):
        rng = np.random.default_rng(self.seed)
        n, d = X.shape
        t = 2.0 * y - 1.0
        w = np.zeros(d)
        b = 0.0
        lr, reg, bs = self.hp["lr"], self.hp["reg"], self.hp["batch_size"]
        for _ in range(self.hp["epochs"]):
            order = rng.permutation(n)
            for s in range(0, n, bs):
                i = order[s : s + bs]
                viol = t[i] * (X[i] @ w + b) < 1
                gw = reg * w - (t[i][viol] @ X[i][viol]) / len(i)
                gb = -t[i][viol].sum() / len(i)
                w -= lr * gw
                b -= lr * gb
            if not np.all(np.isfinite(w)):
                raise DivergenceError("linear_svm: non-finite weights; try a smaller lr")
        self.w, self.b = w, b
        self.link = fit_logistic_link(X @ w + b, y)

    def margin(self, X):
        return X @ self.w + self.b

    def _predict(self, X):
        return sigmoid(self.link[0] * self.margin(X) + self.link[1])

    def params(self):
        return {"w": self.w, "b": np.array([self.b]), "link": self.link}

    def load_params(self, p):
        self.w = np.asarray(p["w"], dtype=np.float64)
        self.b = float(p["b"][0])
        self.link = np.asarray(p["link"], dtype=np.float64)
