"""Threshold metrics, ROC/AUC and the outer cross-validation driver.

Each outer fold standardizes on its training rows, resamples the training rows
only, fits, and scores the untouched test fold. Row ids are checked at every
step so a held-out row can never reach the scaler, the sampler or the model.
"""

from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, fit_standardizer, stratified_kfold
from .errors import LeakageError, UndefinedAucError
from .resampling import ResamplePlan, resample
from .seeding import derive_seed

THRESHOLD = 0.5
SAMPLERS = ("none", "smote", "smote_kmeans")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(labels, scores, threshold: float = THRESHOLD) -> ConfusionCounts:
    """Counts at ``threshold``; a score equal to the threshold is called positive."""
    y = np.asarray(labels).astype(bool)
    pred = np.asarray(scores, dtype=np.float64) >= threshold
    return ConfusionCounts(
        tp=int((pred & y).sum()),
        fp=int((pred & ~y).sum()),
        tn=int((~pred & ~y).sum()),
        fn=int((~pred & y).sum()),
    )


def basic_metrics(c: ConfusionCounts):
    """(accuracy, recall, precision); an undefined ratio is NaN and raises a warning."""
    accuracy = (c.tp + c.tn) / c.n if c.n else math.nan
    if c.tp + c.fn == 0:
        warnings.warn("recall undefined: no positive labels", RuntimeWarning, stacklevel=2)
        recall = math.nan
    else:
        recall = c.tp / (c.tp + c.fn)
    if c.tp + c.fp == 0:
        warnings.warn("precision undefined: no positive predictions", RuntimeWarning, stacklevel=2)
        precision = math.nan
    else:
        precision = c.tp / (c.tp + c.fp)
    return accuracy, recall, precision


def roc_auc(labels, scores):
    """ROC points at every distinct score and the trapezoidal area under them.

    Tied scores form a single diagonal step, so the area equals
    P(s+ > s-) + 0.5 P(s+ = s-). The sum runs on integer counts and is
    divided once at the end.
    """
    y = np.asarray(labels).astype(np.int64)
    s = np.asarray(scores, dtype=np.float64)
    P = int(y.sum())
    N = len(y) - P
    if P == 0 or N == 0:
        raise UndefinedAucError("AUC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.r_[0, np.cumsum(y)[ends]]
    fps = np.r_[0, (ends + 1) - tps[1:]]
    area2 = int(((fps[1:] - fps[:-1]) * (tps[1:] + tps[:-1])).sum())
    points = list(zip((fps / N).tolist(), (tps / P).tolist()))
    return points, area2 / (2 * P * N)


# ------------------------------------------------------------------ reporting


@dataclass
class EvalReport:
    folds: list  # one dict per outer fold
    roc_points: list  # pooled over all out-of-fold test scores
    pooled_auc: float
    protocol: dict
    sampler_counts: list = field(default_factory=list)

    METRICS = ("accuracy", "recall", "precision", "auc")

    def aggregate(self) -> dict:
        out = {}
        for m in self.METRICS:
            vals = np.array([f[m] for f in self.folds], dtype=np.float64)
            out[m] = float(np.mean(vals))
            out[m + "_std"] = float(np.std(vals))
        return out

    def metrics_csv(self) -> str:
        cols = ["fold", "n_test", "tp", "fp", "tn", "fn", *self.METRICS]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for f in self.folds:
            buf.write(",".join([str(f[c]) for c in cols[:6]] + [_fmt(f[m]) for m in self.METRICS]) + "\n")
        agg = self.aggregate()
        blank = [""] * 5
        buf.write(",".join(["mean", *blank] + [_fmt(agg[m]) for m in self.METRICS]) + "\n")
        buf.write(",".join(["std", *blank] + [_fmt(agg[m + "_std"]) for m in self.METRICS]) + "\n")
        return buf.getvalue()

    def roc_tsv(self) -> str:
        return "fpr\ttpr\n" + "".join(f"{x!r}\t{y!r}\n" for x, y in self.roc_points)

    def markdown_table(self, label: str | None = None) -> str:
        label = label or self.protocol.get("label", "model")
        agg = self.aggregate()
        return (
            "| Method | Accuracy | Recall | AUC |\n"
            "|---|---|---|---|\n"
            f"| {label} | {agg['accuracy']:.2f} | {agg['recall']:.2f} | {agg['auc']:.2f} |\n"
        )

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "folds": self.folds,
            "aggregate": self.aggregate(),
            "pooled_auc": self.pooled_auc,
            "sampler_counts": self.sampler_counts,
        }


def _fmt(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def check_roc_points(points) -> None:
    xs, ys = np.array(points).T
    if tuple(points[0]) != (0.0, 0.0) or tuple(points[-1]) != (1.0, 1.0):
        raise AssertionError("ROC must run from (0,0) to (1,1)")
    if (np.diff(xs) < 0).any() or (np.diff(ys) < 0).any():
        raise AssertionError("ROC points must be monotone")


# --------------------------------------------------------------- cross-validation


def fit_model(spec, ds: Dataset):
    """Fit a ClassifierSpec or EnsembleSpec; the result exposes ``predict_proba``."""
    from .ensemble import EnsembleSpec, train_stacked_ensemble

    if isinstance(spec, EnsembleSpec):
        return train_stacked_ensemble(ds, spec)
    return spec.build().fit(ds)


def _spec_label(spec) -> str:
    from .ensemble import EnsembleSpec

    return "ensemble" if isinstance(spec, EnsembleSpec) else spec.kind


def _spec_dict(spec) -> dict:
    return spec.to_dict()


def _run_fold(ds, train_idx, test_idx, fold, sampler, spec, plan, seed, id_offset):
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    test_ids = set(test.row_ids.tolist())
    scaler = fit_standardizer(train)
    if test_ids & set(train.row_ids.tolist()):
        raise LeakageError(f"fold {fold}: test rows inside the standardizer fit set")
    train_s, test_s = scaler.apply(train), scaler.apply(test)

    fold_plan = replace(plan, smote=replace(plan.smote, seed=derive_seed(seed, "sampler", fold)))
    res = resample(train_s, sampler, fold_plan, id_offset=id_offset)
    used = set(res.dataset.row_ids.tolist()) | set(res.parents[res.parents >= 0].tolist())
    if test_ids & used:
        raise LeakageError(f"fold {fold}: test rows reached the sampler output")

    model = fit_model(spec.with_seed(derive_seed(seed, "model", fold)), res.dataset)
    scores = model.predict_proba(test_s.features)
    c = confusion(test.labels, scores)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        acc, rec, prec = basic_metrics(c)
    _, auc = roc_auc(test.labels, scores)
    row = {
        "fold": fold, "n_test": len(test_idx),
        "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn,
        "accuracy": acc, "recall": rec, "precision": prec, "auc": auc,
    }
    return row, scores, res.counts()


def crossval_evaluate(ds: Dataset, sampler: str, spec, k: int = 10, seed: int = 0,
                      plan: ResamplePlan | None = None, jobs: int = 1) -> EvalReport:
    """Stratified k-fold evaluation of ``spec`` with ``sampler`` applied inside each fold."""
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")
    ds.require_trainable()
    plan = plan or ResamplePlan()
    folds = stratified_kfold(ds, k, derive_seed(seed, "outer-folds"))
    id_offset = int(ds.row_ids.max()) + 1
    tasks = [(ds, folds.train_index(f), folds.test_index(f), f, sampler, spec, plan, seed, id_offset)
             for f in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, *zip(*tasks)))
    else:
        results = [_run_fold(*t) for t in tasks]

    pooled = np.empty(ds.n_rows)
    for f, (_, scores, _) in enumerate(results):
        pooled[folds.test_index(f)] = scores
    points, pooled_auc = roc_auc(ds.labels, pooled)
    protocol = {
        "label": _spec_label(spec),
        "sampler": sampler,
        "model": _spec_dict(spec),
        "folds": k,
        "seed": seed,
        "threshold": THRESHOLD,
        "n_rows": ds.n_rows,
        "n_fraud": ds.n_fraud,
    }
    return EvalReport(
        folds=[r[0] for r in results],
        roc_points=points,
        pooled_auc=pooled_auc,
        protocol=protocol,
        sampler_counts=[r[2] for r in results],
    )
