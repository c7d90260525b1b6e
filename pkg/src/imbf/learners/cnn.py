"""One-dimensional convolutional classifier over the feature vector.

conv (valid, stride 1) -> ReLU -> max-pool (width 2, stride 2) -> dense -> sigmoid.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .base import GradientModel, glorot, register_learner, sigmoid


def conv1d(X, W, b):
    """Valid cross-correlation: out[n, f, j] = sum_k W[f, k] * X[n, j + k] + b[f]."""
    patches = sliding_window_view(X, W.shape[1], axis=1)  # (n, L, K)
    return np.einsum("nlk,fk->nfl", patches, W) + b[None, :, None], patches


def maxpool2(A):
    """Non-overlapping width-2 max pool; also returns which element of each pair won (first on ties)."""
    Lp = A.shape[2] // 2
    pairs = A[:, :, : 2 * Lp].reshape(A.shape[0], A.shape[1], Lp, 2)
    arg = (pairs[..., 1] > pairs[..., 0]).astype(np.int64)
    return np.take_along_axis(pairs, arg[..., None], axis=3)[..., 0], arg


def pooled_length(d: int, kernel: int) -> int:
    return (d - kernel + 1) // 2


@register_learner("cnn1d")
class CNN1D(GradientModel):
    defaults = {"filters": 8, "kernel": 3, "epochs": 20, "lr": 0.05, "batch_size": 64}

    def init_params(self, d, rng):
        F, K = self.hp["filters"], self.hp["kernel"]
        if d < K:
            raise ShapeError(f"cnn1d: {d} features is fewer than kernel width {K}")
        Lp = pooled_length(d, K)
        if Lp < 1:
            raise ShapeError(f"cnn1d: {d} features leave nothing after pooling with kernel {K}")
        return {
            "conv.W": glorot(rng, K, F, (F, K)),
            "conv.b": np.zeros(F),
            "head.w": glorot(rng, F * Lp, 1, (F * Lp,)),
            "head.b": np.zeros(1),
        }

    def _logits(self, params, X):
        Z, patches = conv1d(X, params["conv.W"], params["conv.b"])
        A = np.maximum(Z, 0.0)
        P, arg = maxpool2(A)
        flat = P.reshape(len(X), -1)
        return flat @ params["head.w"] + params["head.b"][0], (Z, patches, P, arg, flat)

    def forward(self, params, X):
        return sigmoid(self._logits(params, X)[0])

    def loss_and_grad(self, params, X, y):
        logit, (Z, patches, P, arg, flat) = self._logits(params, X)
        loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
        dlogit = (sigmoid(logit) - y) / len(y)
        grads = {"head.w": flat.T @ dlogit, "head.b": np.array([dlogit.sum()])}
        dP = np.outer(dlogit, params["head.w"]).reshape(P.shape)
        n, F, Lp = P.shape
        dpairs = np.zeros((n, F, Lp, 2))
        np.put_along_axis(dpairs, arg[..., None], dP[..., None], axis=3)
        dA = np.zeros_like(Z)
        dA[:, :, : 2 * Lp] = dpairs.reshape(n, F, 2 * Lp)
        dZ = dA * (Z > 0)
        grads["conv.W"] = np.einsum("nfl,nlk->fk", dZ, patches)
        grads["conv.b"] = dZ.sum(axis=(0, 2))
        return loss, grads
