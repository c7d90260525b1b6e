"""Oversampling: SMOTE interpolation, Lloyd k-means, and cluster-purity noise filtering.

The two-pass clean-and-balance pipeline lives in :func:`smote_kmeans_resample`:
oversample the minority class, cluster everything, drop synthetic rows that
landed in clusters not dominated by real minority rows, then top the minority
class back up with a second oversampling pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .data import Dataset
from .errors import ClusterCountError, ConfigError, NeighborCountError, SmoteUnderflowError, TrainingError
from .seeding import derive_seed

log = logging.getLogger(__name__)

ORIGINAL, SYN1, SYN2 = "original", "synthetic_pass1", "synthetic_pass2"
ORIGIN_CODES = {ORIGINAL: "orig", SYN1: "syn1", SYN2: "syn2"}

_CHUNK = 512


# ------------------------------------------------------------------------ knn


def _sq_dists(A, B, b_sq=None):
    if b_sq is None:
        b_sq = (B * B).sum(1)
    d = (A * A).sum(1)[:, None] - 2.0 * A @ B.T + b_sq[None, :]
    return np.maximum(d, 0.0)


def _knn_rows(points, query_rows, k):
    """Neighbor table for ``query_rows``: k indices each, self excluded, ties by index."""
    n = len(points)
    s = min(k + 8, n - 1)
    out = np.empty((len(query_rows), k), dtype=np.int64)
    for start in range(0, len(query_rows), _CHUNK):
        q = query_rows[start : start + _CHUNK]
        approx = _sq_dists(points[q], points)
        approx[np.arange(len(q)), q] = np.inf
        # shortlist with the fast expansion, then rank the shortlist exactly
        shortlist = np.argpartition(approx, s - 1, axis=1)[:, :s]
        for i, row in enumerate(q):
            idx = shortlist[i]
            dist = ((points[idx] - points[row]) ** 2).sum(1)
            kth = np.partition(dist, k - 1)[k - 1]
            if s < n - 1 and dist.max() <= kth:
                # a tie group may extend past the shortlist
                dist = ((points - points[row]) ** 2).sum(1)
                dist[row] = np.inf
                idx = np.arange(n)
            order = np.lexsort((idx, dist))
            out[start + i] = idx[order[:k]]
    return out


def knn_indices(points, query_index: int, k: int) -> list:
    """Indices of the ``k`` nearest rows to ``points[query_index]`` (Euclidean).

    The query row is excluded; results ascend by distance with ties broken
    by ascending row index.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if k < 1 or k >= n:
        raise NeighborCountError(f"need 1 <= k < {n} points, got k={k}")
    d = ((points - points[query_index]) ** 2).sum(1)
    d[query_index] = np.inf
    order = np.lexsort((np.arange(n), d))
    return [int(i) for i in order[:k]]


# ---------------------------------------------------------------------- smote


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise ValueError("target_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class SmoteSamples:
    """Synthetic rows plus the (base, neighbor) parent indices and gap used for each."""

    rows: np.ndarray
    parents: np.ndarray  # (n, 2) indices into the minority array passed in
    gaps: np.ndarray


def smote_point(x_i, x_l, gap):
    """x_i + gap * (x_l - x_i): a point on the segment from x_i toward its neighbor x_l."""
    x_i = np.asarray(x_i, dtype=np.float64)
    return x_i + gap * (np.asarray(x_l, dtype=np.float64) - x_i)


def synthetic_deficit(n_minor: int, n_major: int, target_ratio: float) -> int:
    return max(0, math.ceil(target_ratio * n_major) - n_minor)


def smote_generate(minority_rows, config: SmoteConfig, n_synthetic: int, rng=None) -> SmoteSamples:
    """Interpolate ``n_synthetic`` rows: x_i + r * (x_l - x_i), r ~ U[0, 1).

    Base rows x_i are drawn uniformly; x_l is drawn uniformly from the
    ``k_neighbors`` nearest minority rows of x_i. When fewer than
    ``k_neighbors + 1`` minority rows exist the neighborhood shrinks to all
    other rows.
    """
    X = np.asarray(minority_rows, dtype=np.float64)
    m = len(X)
    if m < 2:
        raise SmoteUnderflowError(f"SMOTE needs at least 2 minority rows, got {m}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d = X.shape[1]
    if n_synthetic <= 0:
        return SmoteSamples(np.empty((0, d)), np.empty((0, 2), dtype=np.int64), np.empty(0))
    k = config.k_neighbors
    if k >= m:
        log.warning("k_neighbors=%d >= minority count %d; using k=%d", k, m, m - 1)
        k = m - 1
    base = rng.integers(0, m, size=n_synthetic)
    pick = rng.integers(0, k, size=n_synthetic)
    gaps = rng.random(n_synthetic)
    uniq, inverse = np.unique(base, return_inverse=True)
    table = _knn_rows(X, uniq, k)
    nbr = table[inverse, pick]
    rows = smote_point(X[base], X[nbr], gaps[:, None])
    return SmoteSamples(rows, np.stack([base, nbr], axis=1), gaps)


# --------------------------------------------------------------------- kmeans


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    wcss: float
    iterations_run: int
    history: tuple = ()  # WCSS after the initial assignment and after every Lloyd iteration

    def predict(self, points) -> np.ndarray:
        return _assign(np.asarray(points, dtype=np.float64), self.centroids)


def wcss(points, assignments, centroids) -> float:
    """Within-cluster sum of squared distances to the assigned centroids."""
    diff = np.asarray(points, dtype=np.float64) - np.asarray(centroids)[assignments]
    return float((diff * diff).sum())


def _assign(X, C, current=None):
    """Nearest centroid per row, ties to the lowest centroid index.

    With ``current`` given, a row only moves when the exact distance to the
    new centroid is strictly smaller, which keeps WCSS monotone under
    floating-point rounding of the fast distance expansion.
    """
    labels = np.empty(len(X), dtype=np.int64)
    c_sq = (C * C).sum(1)
    for s in range(0, len(X), 4096):
        blk = X[s : s + 4096]
        # the row norm is constant per row and cannot change the argmin
        labels[s : s + 4096] = np.argmin(c_sq[None, :] - 2.0 * blk @ C.T, axis=1)
    if current is not None:
        moved = np.flatnonzero(labels != current)
        if len(moved):
            xs = X[moved]
            new_d = ((xs - C[labels[moved]]) ** 2).sum(1)
            old_d = ((xs - C[current[moved]]) ** 2).sum(1)
            stay = ~(new_d < old_d)
            labels[moved[stay]] = current[moved[stay]]
    return labels


def _kmeanspp(X, k, rng):
    """Greedy k-means++: each step samples 2 + ln(k) candidates and keeps the one that lowers the potential most."""
    n = len(X)
    trials = 2 + int(math.log(k)) if k > 1 else 1
    centers = [int(rng.integers(n))]
    closest = ((X - X[centers[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # remaining mass is zero: fall back to the first unused distinct point
            taken = X[centers]
            nxt = next(i for i in range(n) if not (taken == X[i]).all(1).any())
            cand_closest = np.minimum(closest, ((X - X[nxt]) ** 2).sum(1))
        else:
            picks = np.searchsorted(np.cumsum(closest), rng.random(trials) * total, side="right")
            picks = np.minimum(picks, n - 1)
            options = np.minimum(closest[None, :], _sq_dists(X[picks], X))
            best = int(np.argmin(options.sum(1)))
            nxt, cand_closest = int(picks[best]), options[best]
        centers.append(nxt)
        closest = cand_closest
    return X[centers].copy()


def _lloyd(X, k, rng, max_iter, tol):
    C = _kmeanspp(X, k, rng)
    labels = _assign(X, C)
    history = [wcss(X, labels, C)]
    it = 0
    for it in range(1, max_iter + 1):
        newC = C.copy()
        counts = np.bincount(labels, minlength=k)
        onehot = sparse.csr_matrix((np.ones(len(X)), (labels, np.arange(len(X)))), shape=(k, len(X)))
        sums = onehot @ X
        filled = counts > 0
        newC[filled] = sums[filled] / counts[filled, None]
        if (~filled).any():
            # re-seed each empty cluster at the row farthest from its centroid
            dist = ((X - newC[labels]) ** 2).sum(1)
            for j in np.flatnonzero(~filled):
                far = int(np.argmax(dist))
                newC[j] = X[far]
                dist[far] = -1.0
        shift = float(np.sqrt(((newC - C) ** 2).sum(1)).max())
        C = newC
        new_labels = _assign(X, C, current=labels)
        history.append(wcss(X, new_labels, C))
        changed = (new_labels != labels).any()
        labels = new_labels
        if shift < tol or not changed:
            break
    return C, labels, history, it


def kmeans_fit(points, k: int, seed: int, max_iter: int = 100, tol: float = 1e-4, n_init: int = 3) -> KMeansModel:
    """Lloyd's algorithm from k-means++ seeds; the best of ``n_init`` restarts is kept."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1:
        raise ClusterCountError("k must be >= 1")
    n_distinct = len(np.unique(X, axis=0))
    if k > n_distinct:
        raise ClusterCountError(f"k={k} exceeds the {n_distinct} distinct points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        C, labels, history, it = _lloyd(X, k, rng, max_iter, tol)
        if best is None or history[-1] < best[2][-1]:
            best = (C, labels, history, it)
    C, labels, history, it = best
    C.setflags(write=False)
    labels.setflags(write=False)
    return KMeansModel(k, C, labels, history[-1], it, tuple(history))


def default_cluster_count(n_rows: int) -> int:
    return max(2, round(math.sqrt(n_rows / 2)))


# ---------------------------------------------------------------- noise filter


def filter_noise(points, labels, is_synthetic, n_clusters=None, purity_threshold=0.5, seed=0,
                 max_iter=100, tol=1e-4, n_init=1):
    """Boolean keep-mask over the synthetic rows, and the number removed.

    K-means runs on every row. A cluster's purity is the minority share among
    its *original* rows; synthetic rows in clusters whose purity is below
    ``purity_threshold`` (or that hold no original rows) are dropped.
    Original rows are never touched.
    """
    X = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels)
    syn = np.asarray(is_synthetic, dtype=bool)
    if not syn.any():
        return np.ones(0, dtype=bool), 0
    k = n_clusters or default_cluster_count(len(X))
    k = min(k, len(np.unique(X, axis=0)))
    model = kmeans_fit(X, k, seed, max_iter=max_iter, tol=tol, n_init=n_init)
    a = model.assignments
    orig = ~syn
    n_orig = np.bincount(a[orig], minlength=k)
    n_orig_min = np.bincount(a[orig], weights=(y[orig] == 1).astype(float), minlength=k)
    purity = np.divide(n_orig_min, n_orig, out=np.zeros(k), where=n_orig > 0)
    keep = purity[a[syn]] >= purity_threshold
    return keep, int((~keep).sum())


# --------------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class ResamplePlan:
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    n_clusters: int | None = None
    purity_threshold: float = 0.5
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-4

    @classmethod
    def from_dict(cls, d: dict, seed: int = 0) -> "ResamplePlan":
        d = dict(d)
        smote_keys = {"k_neighbors", "target_ratio"}
        known = smote_keys | {"n_clusters", "purity_threshold", "kmeans_max_iter", "kmeans_tol"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sampler parameter(s): {sorted(unknown)}")
        try:
            smote = SmoteConfig(seed=seed, **{k: d.pop(k) for k in list(d) if k in smote_keys})
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return cls(smote=smote, **d)


@dataclass(frozen=True)
class ResampleResult:
    dataset: Dataset
    provenance: np.ndarray  # ORIGINAL / SYN1 / SYN2 per row
    parents: np.ndarray  # (n, 2) parent row ids; -1 for original rows
    gaps: np.ndarray  # interpolation factor; NaN for original rows
    removed_as_noise: int = 0
    generated_pass1: int = 0

    def counts(self) -> dict:
        p = self.provenance
        return {
            "original": int((p == ORIGINAL).sum()),
            "syn1": int((p == SYN1).sum()),
            "syn2": int((p == SYN2).sum()),
            "removed": self.removed_as_noise,
        }

    def origin_column(self) -> list:
        return [ORIGIN_CODES[p] for p in self.provenance]


def _identity_result(train: Dataset) -> ResampleResult:
    n = train.n_rows
    return ResampleResult(
        train,
        np.full(n, ORIGINAL, dtype=object),
        np.full((n, 2), -1, dtype=np.int64),
        np.full(n, np.nan),
    )


def _check_train(train: Dataset):
    train.require_trainable()
    n_min = train.n_fraud
    if n_min < 2:
        raise SmoteUnderflowError(f"need at least 2 minority rows, got {n_min}")
    if train.n_rows - n_min < 2:
        raise TrainingError("need at least 2 majority rows")


def _synthetic_block(train, minority_ids, samples, start_id, tag):
    n = len(samples.rows)
    ds = Dataset(samples.rows, np.ones(n, dtype=np.int64), train.feature_names,
                 np.arange(start_id, start_id + n))
    parents = minority_ids[samples.parents] if n else np.empty((0, 2), dtype=np.int64)
    return ds, np.full(n, tag, dtype=object), parents, samples.gaps


def _assemble(blocks, removed, generated):
    from .data import concat

    ds = concat([b[0] for b in blocks])
    return ResampleResult(
        ds,
        np.concatenate([b[1] for b in blocks]),
        np.vstack([b[2] for b in blocks]).astype(np.int64),
        np.concatenate([b[3] for b in blocks]),
        removed,
        generated,
    )


def smote_resample(train: Dataset, config: SmoteConfig, id_offset: int | None = None) -> ResampleResult:
    """Plain single-pass SMOTE up to ``target_ratio`` times the majority count."""
    _check_train(train)
    n_min = train.n_fraud
    need = synthetic_deficit(n_min, train.n_rows - n_min, config.target_ratio)
    if need == 0:
        return _identity_result(train)
    start = int(train.row_ids.max()) + 1 if id_offset is None else id_offset
    min_idx = np.flatnonzero(train.labels == 1)
    rng = np.random.default_rng(derive_seed(config.seed, "smote-pass1"))
    samples = smote_generate(train.features[min_idx], config, need, rng)
    orig = _identity_result(train)
    blocks = [
        (orig.dataset, orig.provenance, orig.parents, orig.gaps),
        _synthetic_block(train, train.row_ids[min_idx], samples, start, SYN1),
    ]
    return _assemble(blocks, 0, need)


def smote_kmeans_resample(train: Dataset, plan: ResamplePlan | None = None,
                          id_offset: int | None = None) -> ResampleResult:
    """Oversample, filter synthetic noise by cluster purity, merge, then oversample again.

    Synthetic rows get ids starting at ``id_offset`` (default: one past the
    largest training id), so they can never collide with held-out rows when
    the caller passes the full dataset's id range.
    """
    plan = plan or ResamplePlan()
    cfg = plan.smote
    _check_train(train)
    n_min = train.n_fraud
    n_maj = train.n_rows - n_min
    need = synthetic_deficit(n_min, n_maj, cfg.target_ratio)
    if need == 0:
        return _identity_result(train)
    start = int(train.row_ids.max()) + 1 if id_offset is None else id_offset

    min_idx = np.flatnonzero(train.labels == 1)
    min_ids = train.row_ids[min_idx]
    pass1 = smote_generate(train.features[min_idx], cfg,
                           need, np.random.default_rng(derive_seed(cfg.seed, "smote-pass1")))
    syn1_ds, syn1_tag, syn1_par, syn1_gap = _synthetic_block(train, min_ids, pass1, start, SYN1)

    all_X = np.vstack([train.features, pass1.rows])
    all_y = np.concatenate([train.labels, np.ones(need, dtype=np.int64)])
    is_syn = np.concatenate([np.zeros(train.n_rows, bool), np.ones(need, bool)])
    keep, removed = filter_noise(
        all_X, all_y, is_syn,
        n_clusters=plan.n_clusters,
        purity_threshold=plan.purity_threshold,
        seed=derive_seed(cfg.seed, "kmeans"),
        max_iter=plan.kmeans_max_iter,
        tol=plan.kmeans_tol,
    )
    kept = np.flatnonzero(keep)
    syn1_block = (syn1_ds.subset(kept), syn1_tag[kept], syn1_par[kept], syn1_gap[kept])

    # second pass: neighbors come from the real plus surviving synthetic minority rows
    pool_X = np.vstack([train.features[min_idx], syn1_block[0].features])
    pool_ids = np.concatenate([min_ids, syn1_block[0].row_ids])
    top_up = synthetic_deficit(len(pool_X), n_maj, cfg.target_ratio)
    pass2 = smote_generate(pool_X, cfg, top_up,
                           np.random.default_rng(derive_seed(cfg.seed, "smote-pass2")))
    syn2_block = _synthetic_block(train, pool_ids, pass2, start + need, SYN2)

    orig = _identity_result(train)
    blocks = [(orig.dataset, orig.provenance, orig.parents, orig.gaps), syn1_block, syn2_block]
    return _assemble(blocks, removed, need)


def resample(train: Dataset, sampler: str, plan: ResamplePlan | None = None,
             id_offset: int | None = None) -> ResampleResult:
    """Dispatch on sampler name: ``none``, ``smote`` or ``smote_kmeans``."""
    plan = plan or ResamplePlan()
    if sampler == "none":
        return _identity_result(train)
    if sampler == "smote":
        return smote_resample(train, plan.smote, id_offset)
    if sampler == "smote_kmeans":
        return smote_kmeans_resample(train, plan, id_offset)
    raise ValueError(f"unknown sampler {sampler!r}")
