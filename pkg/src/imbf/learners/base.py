"""Classifier contract, registry, serialization and the shared gradient-descent loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, DivergenceError, ShapeError

FORMAT_VERSION = 1

_REGISTRY: dict = {}


def register_learner(kind: str) -> Callable:
    """Class decorator adding a :class:`Classifier` subclass under ``kind``."""

    def wrap(cls):
        cls.kind = kind
        _REGISTRY[kind] = cls
        return cls

    return wrap


def learner_kinds() -> list:
    return sorted(_REGISTRY)


def learner_class(kind: str):
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ConfigError(f"unknown classifier kind {kind!r}; known: {learner_kinds()}") from None


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y, p, eps=1e-12):
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        cls = learner_class(self.kind)
        unknown = set(self.hyperparameters) - set(cls.defaults)
        if unknown:
            raise ConfigError(f"unknown hyperparameter(s) for {self.kind}: {sorted(unknown)}")
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ClassifierSpec":
        unknown = set(d) - {"kind", "hyperparameters", "seed"}
        if unknown:
            raise ConfigError(f"unknown classifier spec key(s): {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("classifier spec needs a 'kind'")
        return cls(d["kind"], dict(d.get("hyperparameters", {})), d.get("seed", 0) if seed is None else seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    def with_seed(self, seed: int) -> "ClassifierSpec":
        return ClassifierSpec(self.kind, self.hyperparameters, seed)

    def build(self) -> "Classifier":
        return learner_class(self.kind)(seed=self.seed, **self.hyperparameters)


class Classifier:
    """fit(Dataset) then predict_proba(features) -> fraud score in [0, 1]."""

    kind: str = ""
    defaults: dict = {}

    def __init__(self, seed: int = 0, **hyperparameters):
        unknown = set(hyperparameters) - set(self.defaults)
        if unknown:
            raise ConfigError(f"unknown hyperparameter(s) for {self.kind}: {sorted(unknown)}")
        self.seed = int(seed)
        self.hp = {**self.defaults, **hyperparameters}
        self.n_features = None

    # subclasses implement _fit(X, y) and _predict(X), and expose their state
    # through params() / load_params()
    def fit(self, ds: Dataset) -> "Classifier":
        ds.require_trainable()
        self.n_features = ds.n_cols
        self._fit(ds.features, ds.labels.astype(np.float64))
        return self

    def predict_proba(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.n_features is None:
            raise RuntimeError(f"{self.kind} model is not fitted")
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.clip(self._predict(X), 0.0, 1.0)

    def predict(self, features, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(features) >= threshold).astype(np.int64)

    def params(self) -> dict:
        raise NotImplementedError

    def load_params(self, params: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "hyperparameters": self.hp,
            "seed": self.seed,
            "n_features": self.n_features,
            "params": {k: encode_array(v) for k, v in sorted(self.params().items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def encode_array(a) -> dict:
    a = np.asarray(a)
    return {"dtype": str(a.dtype), "shape": list(a.shape), "data": a.ravel().tolist()}


def decode_array(d) -> np.ndarray:
    return np.array(d["data"], dtype=d["dtype"]).reshape(d["shape"])


def model_from_dict(d: dict) -> Classifier:
    if d.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format_version {d.get('format_version')!r}")
    model = learner_class(d["kind"])(seed=d["seed"], **d["hyperparameters"])
    model.n_features = d["n_features"]
    model.load_params({k: decode_array(v) for k, v in d["params"].items()})
    return model


def model_from_json(text: str) -> Classifier:
    return model_from_dict(json.loads(text))


def glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class GradientModel(Classifier):
    """Models trained by plain mini-batch gradient descent on mean cross-entropy.

    Subclasses provide ``init_params(d, rng)`` and ``loss_and_grad(params, X, y)``.
    """

    def init_params(self, d, rng) -> dict:
        raise NotImplementedError

    def loss_and_grad(self, params, X, y):
        raise NotImplementedError

    def forward(self, params, X):
        raise NotImplementedError

    def _fit(self, X, y):
        rng = np.random.default_rng(self.seed)
        self.theta = self.init_params(X.shape[1], rng)
        lr = self.hp["lr"]
        bs = self.hp["batch_size"]
        self.loss_history = []
        n = len(X)
        for _ in range(self.hp["epochs"]):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, bs):
                b = order[s : s + bs]
                loss, grad = self.loss_and_grad(self.theta, X[b], y[b])
                if not np.isfinite(loss):
                    raise DivergenceError(f"{self.kind}: non-finite loss; try a smaller lr (now {lr})")
                for k, g in grad.items():
                    self.theta[k] -= lr * g
                total += loss * len(b)
            self.loss_history.append(total / n)

    def _predict(self, X):
        return self.forward(self.theta, X)

    def params(self):
        return self.theta

    def load_params(self, params):
        self.theta = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
