"""Stacked ensemble: out-of-fold base-learner scores train a boosted-tree meta-classifier.

Every base learner is fit once per internal fold, optionally on a bootstrap
replicate of the other folds, and scores the held-out fold. The resulting
score matrix (one column per base learner) is the meta-learner's training
set. At inference a base learner's column is the mean over its fold copies.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, stratified_kfold
from .errors import ConfigError, LeakageError, ShapeError
from .learners import ClassifierSpec, model_from_dict
from .seeding import derive_seed

FORMAT_VERSION = 1


def default_base_specs() -> tuple:
    # a wider second Bi-GRU stands in for the recurrent learner the method lists without equations
    return (
        ClassifierSpec("bigru", {"hidden": 16}),
        ClassifierSpec("bigru", {"hidden": 32}),
        ClassifierSpec("cnn1d", {}),
    )


@dataclass(frozen=True)
class EnsembleSpec:
    base_specs: tuple = field(default_factory=default_base_specs)
    meta_spec: ClassifierSpec = field(default_factory=lambda: ClassifierSpec("gbt", {}))
    oof_folds: int = 5
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base_specs", tuple(self.base_specs))
        if not self.base_specs:
            raise ConfigError("an ensemble needs at least one base learner")
        if self.oof_folds < 2:
            raise ConfigError("oof_folds must be >= 2")

    def with_seed(self, seed: int) -> "EnsembleSpec":
        return EnsembleSpec(self.base_specs, self.meta_spec, self.oof_folds, self.bootstrap, seed)

    def to_dict(self) -> dict:
        return {
            "kind": "ensemble",
            "base_specs": [s.to_dict() for s in self.base_specs],
            "meta_spec": self.meta_spec.to_dict(),
            "oof_folds": self.oof_folds,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "EnsembleSpec":
        unknown = set(d) - {"kind", "base_specs", "meta_spec", "oof_folds", "bootstrap", "seed"}
        if unknown:
            raise ConfigError(f"unknown ensemble key(s): {sorted(unknown)}")
        kw = {}
        if "base_specs" in d:
            kw["base_specs"] = tuple(ClassifierSpec.from_dict(s) for s in d["base_specs"])
        if "meta_spec" in d:
            kw["meta_spec"] = ClassifierSpec.from_dict(d["meta_spec"])
        for k in ("oof_folds", "bootstrap"):
            if k in d:
                kw[k] = d[k]
        kw["seed"] = d.get("seed", 0) if seed is None else seed
        return cls(**kw)


@dataclass
class OutOfFold:
    meta: np.ndarray  # (n_rows, n_base) out-of-fold scores
    labels: np.ndarray
    models: list  # models[b][f]
    fold_assignments: np.ndarray
    fit_rows: list  # fit_rows[b][f]: row ids each copy was trained on


def check_out_of_fold(row_ids, fold_assignments, fit_rows) -> None:
    """Raise LeakageError if any row was scored by a copy that trained on it."""
    row_ids = np.asarray(row_ids)
    for b, per_fold in enumerate(fit_rows):
        for f, seen in enumerate(per_fold):
            scored = row_ids[fold_assignments == f]
            hit = np.intersect1d(scored, seen)
            if len(hit):
                raise LeakageError(
                    f"base {b} fold {f}: {len(hit)} row(s) scored by a model trained on them (e.g. id {hit[0]})"
                )


def _stratified_bootstrap(idx, labels, rng):
    parts = []
    for cls in (0, 1):
        members = idx[labels[idx] == cls]
        if len(members):
            parts.append(rng.choice(members, size=len(members), replace=True))
    return np.sort(np.concatenate(parts))


def make_oof_meta_features(train: Dataset, spec: EnsembleSpec) -> OutOfFold:
    """Out-of-fold score matrix for the meta-learner plus the fitted fold copies."""
    train.require_trainable()
    plan = stratified_kfold(train, spec.oof_folds, derive_seed(spec.seed, "inner-folds"))
    K, B = spec.oof_folds, len(spec.base_specs)
    meta = np.empty((train.n_rows, B))
    models = [[None] * K for _ in range(B)]
    fit_rows = [[None] * K for _ in range(B)]
    for b, base in enumerate(spec.base_specs):
        for f in range(K):
            fit_idx = plan.train_index(f)
            if spec.bootstrap:
                rng = np.random.default_rng(derive_seed(spec.seed, f"bootstrap-{b}", f))
                fit_idx = _stratified_bootstrap(fit_idx, train.labels, rng)
            model = base.with_seed(derive_seed(spec.seed, f"base-{b}", f)).build()
            model.fit(train.subset(fit_idx))
            held = plan.test_index(f)
            meta[held, b] = model.predict_proba(train.features[held])
            models[b][f] = model
            fit_rows[b][f] = np.unique(train.row_ids[fit_idx])
    check_out_of_fold(train.row_ids, plan.assignments, fit_rows)
    return OutOfFold(meta, train.labels.copy(), models, plan.assignments, fit_rows)


class StackedEnsemble:
    def __init__(self, spec: EnsembleSpec, base_models, meta_model, fold_assignments, n_features):
        self.spec = spec
        self.base_models = base_models
        self.meta_model = meta_model
        self.fold_assignments = np.asarray(fold_assignments)
        self.n_features = n_features

    def meta_features(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[1]}")
        cols = [np.mean([m.predict_proba(X) for m in copies], axis=0) for copies in self.base_models]
        return np.stack(cols, axis=1)

    def predict_proba(self, features) -> np.ndarray:
        return self.meta_model.predict_proba(self.meta_features(features))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "stacked_ensemble",
            "spec": self.spec.to_dict(),
            "n_features": self.n_features,
            "fold_assignments": self.fold_assignments.tolist(),
            "base_models": [[m.to_dict() for m in copies] for copies in self.base_models],
            "meta_model": self.meta_model.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "StackedEnsemble":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "stacked_ensemble":
            raise ConfigError("not a stacked ensemble manifest of a supported version")
        return cls(
            EnsembleSpec.from_dict(d["spec"]),
            [[model_from_dict(m) for m in copies] for copies in d["base_models"]],
            model_from_dict(d["meta_model"]),
            d["fold_assignments"],
            d["n_features"],
        )

    def save(self, directory, extra: dict | None = None) -> Path:
        """Write member models as separate files plus a manifest that references them by hash.

        ``extra`` entries are merged into the manifest (e.g. the fitted standardizer).
        """
        directory = Path(directory)
        (directory / "members").mkdir(parents=True, exist_ok=True)
        refs = []
        for b, copies in enumerate(self.base_models):
            row = []
            for f, m in enumerate(copies):
                row.append(_write_member(directory, f"members/base{b}_fold{f}.json", m))
            refs.append(row)
        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": "stacked_ensemble",
            "spec": self.spec.to_dict(),
            "n_features": self.n_features,
            "fold_assignments": self.fold_assignments.tolist(),
            "base_models": refs,
            "meta_model": _write_member(directory, "members/meta.json", self.meta_model),
            **(extra or {}),
        }
        path = directory / "model.json"
        path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "StackedEnsemble":
        path = Path(path)
        manifest = json.loads(path.read_text())
        root = path.parent

        def member(ref):
            text = (root / ref["path"]).read_text()
            if hashlib.sha256(text.encode()).hexdigest() != ref["sha256"]:
                raise ConfigError(f"member {ref['path']} does not match its recorded hash")
            return json.loads(text)

        manifest["base_models"] = [[member(r) for r in row] for row in manifest["base_models"]]
        manifest["meta_model"] = member(manifest["meta_model"])
        return cls.from_dict(manifest)


def _write_member(directory, rel, model) -> dict:
    text = model.to_json()
    (directory / rel).write_text(text)
    return {"path": rel, "sha256": hashlib.sha256(text.encode()).hexdigest()}


def train_stacked_ensemble(train: Dataset, spec: EnsembleSpec | None = None) -> StackedEnsemble:
    spec = spec or EnsembleSpec()
    oof = make_oof_meta_features(train, spec)
    names = [f"{s.kind}_{b}" for b, s in enumerate(spec.base_specs)]
    meta_ds = Dataset(oof.meta, oof.labels, names, train.row_ids)
    meta = spec.meta_spec.with_seed(derive_seed(spec.seed, "meta")).build().fit(meta_ds)
    return StackedEnsemble(spec, oof.models, meta, oof.fold_assignments, train.n_cols)


def predict_ensemble(model: StackedEnsemble, features) -> np.ndarray:
    return model.predict_proba(features)
