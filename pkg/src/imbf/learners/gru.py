"""Gated recurrent units and a bidirectional GRU classifier with hand-written BPTT.

A tabular row of d features is read as a length-d sequence of scalars. The
forward GRU reads it left to right, the backward GRU right to left, and the
two final hidden states feed a logistic output unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .base import GradientModel, glorot, register_learner, sigmoid

GATES = ("z", "r", "c")


@dataclass(frozen=True)
class GruParams:
    """Gate weights act on the concatenation ``[h_prev, x_t]``."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_c: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        H = len(self.b_z)
        for name in ("W_z", "W_r", "W_c"):
            W = getattr(self, name)
            if W.ndim != 2 or W.shape[0] != H or W.shape[1] <= H:
                raise ShapeError(f"{name} has shape {W.shape}; expected ({H}, {H} + input_size)")
        if self.W_r.shape != self.W_z.shape or self.W_c.shape != self.W_z.shape:
            raise ShapeError("gate weight matrices differ in shape")
        if self.b_r.shape != (H,) or self.b_c.shape != (H,):
            raise ShapeError("bias vectors must all have length hidden_size")
        for v in (self.W_z, self.W_r, self.W_c, self.b_z, self.b_r, self.b_c):
            if not np.isfinite(v).all():
                raise ValueError("GRU parameters must be finite")

    @property
    def hidden_size(self) -> int:
        return len(self.b_z)

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1] - self.hidden_size

    @classmethod
    def from_flat(cls, p: dict, prefix: str) -> "GruParams":
        return cls(*(p[f"{prefix}W_{g}"] for g in GATES), *(p[f"{prefix}b_{g}"] for g in GATES))

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int = 1) -> "GruParams":
        W = np.zeros((hidden_size, hidden_size + input_size))
        b = np.zeros(hidden_size)
        return cls(W, W.copy(), W.copy(), b, b.copy(), b.copy())


def _as_batch(h_prev, x_t, params):
    h = np.asarray(h_prev, dtype=np.float64)
    x = np.asarray(x_t, dtype=np.float64)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    x = x.reshape(len(h), -1)
    if h.shape[1] != params.hidden_size or x.shape[1] != params.input_size:
        raise ShapeError(
            f"h_prev has {h.shape[1]} units and x_t {x.shape[1]} inputs; "
            f"params expect {params.hidden_size} and {params.input_size}"
        )
    return h, x, single


def _step(W_z, W_r, W_c, b_z, b_r, b_c, h, x):
    H = h.shape[1]
    z = sigmoid(h @ W_z[:, :H].T + x @ W_z[:, H:].T + b_z)
    r = sigmoid(h @ W_r[:, :H].T + x @ W_r[:, H:].T + b_r)
    rh = r * h
    c = np.tanh(rh @ W_c[:, :H].T + x @ W_c[:, H:].T + b_c)
    h_new = (1.0 - z) * h + z * c
    return h_new, (h, x, z, r, rh, c)


def gru_step(params: GruParams, h_prev, x_t) -> np.ndarray:
    """One GRU update. Accepts a single state vector or a batch of rows."""
    h, x, single = _as_batch(h_prev, x_t, params)
    h_new, _ = _step(params.W_z, params.W_r, params.W_c, params.b_z, params.b_r, params.b_c, h, x)
    return h_new[0] if single else h_new


def run_gru(p: dict, prefix: str, seq: np.ndarray, keep_cache: bool = False):
    """Run a GRU over ``seq`` of shape (batch, T), returning the final state (and step caches)."""
    W = [p[f"{prefix}W_{g}"] for g in GATES]
    b = [p[f"{prefix}b_{g}"] for g in GATES]
    h = np.zeros((len(seq), len(b[0])))
    caches = []
    for t in range(seq.shape[1]):
        h, cache = _step(*W, *b, h, seq[:, t : t + 1])
        if keep_cache:
            caches.append(cache)
    return h, caches


def backprop_gru(p: dict, prefix: str, caches, dh: np.ndarray, grads: dict) -> None:
    """Accumulate parameter gradients for one GRU given dL/d(final state)."""
    W_z, W_r, W_c = (p[f"{prefix}W_{g}"] for g in GATES)
    H = dh.shape[1]
    gW = {g: np.zeros_like(W_z) for g in GATES}
    gb = {g: np.zeros(H) for g in GATES}
    for h, x, z, r, rh, c in reversed(caches):
        dz = dh * (c - h)
        dc = dh * z
        dh_prev = dh * (1.0 - z)

        dac = dc * (1.0 - c * c)
        gW["c"][:, :H] += dac.T @ rh
        gW["c"][:, H:] += dac.T @ x
        gb["c"] += dac.sum(0)
        drh = dac @ W_c[:, :H]
        dr = drh * h
        dh_prev += drh * r

        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        for g, da, Wg in (("z", daz, W_z), ("r", dar, W_r)):
            gW[g][:, :H] += da.T @ h
            gW[g][:, H:] += da.T @ x
            gb[g] += da.sum(0)
            dh_prev += da @ Wg[:, :H]
        dh = dh_prev
    for g in GATES:
        grads[f"{prefix}W_{g}"] = gW[g]
        grads[f"{prefix}b_{g}"] = gb[g]


@register_learner("bigru")
class BiGRU(GradientModel):
    defaults = {"hidden": 16, "epochs": 20, "lr": 0.1, "batch_size": 64}

    def init_params(self, d, rng):
        H = self.hp["hidden"]
        p = {}
        for prefix in ("fwd.", "bwd."):
            for g in GATES:
                p[f"{prefix}W_{g}"] = glorot(rng, H + 1, H, (H, H + 1))
                p[f"{prefix}b_{g}"] = np.zeros(H)
        p["head.w"] = glorot(rng, 2 * H, 1, (2 * H,))
        p["head.b"] = np.zeros(1)
        return p

    def hidden_states(self, X, params=None):
        """Final forward and backward hidden states for each row."""
        p = self.theta if params is None else params
        X = np.asarray(X, dtype=np.float64)
        hf, _ = run_gru(p, "fwd.", X)
        hb, _ = run_gru(p, "bwd.", X[:, ::-1])
        return hf, hb

    def forward(self, params, X):
        hf, hb = self.hidden_states(X, params)
        return sigmoid(np.concatenate([hf, hb], axis=1) @ params["head.w"] + params["head.b"][0])

    def loss_and_grad(self, params, X, y):
        hf, cf = run_gru(params, "fwd.", X, keep_cache=True)
        hb, cb = run_gru(params, "bwd.", X[:, ::-1], keep_cache=True)
        feats = np.concatenate([hf, hb], axis=1)
        logit = feats @ params["head.w"] + params["head.b"][0]
        loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
        dlogit = (sigmoid(logit) - y) / len(y)
        H = hf.shape[1]
        grads = {"head.w": feats.T @ dlogit, "head.b": np.array([dlogit.sum()])}
        dfeats = np.outer(dlogit, params["head.w"])
        backprop_gru(params, "fwd.", cf, dfeats[:, :H], grads)
        backprop_gru(params, "bwd.", cb, dfeats[:, H:], grads)
        return loss, grads
