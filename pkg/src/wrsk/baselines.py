"""Comparison methods: k-means, trimmed k-means, sparse k-means and a
simplified robust sparse k-means.

All of them seed with ROBIN unless initial indices are supplied, and all
return :class:`~wrsk.core.ClusterModel` records. Trimmed observations get
observation weight 0, kept ones weight 1, so the gap machinery and the
v < 0.5 outlier rule apply unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ClusterModel,
    FitConfig,
    ObservationWeights,
    _repair_empty,
    center_distances,
    sparse_alternation,
    weighted_assign,
    weighted_bcss,
    weighted_centers,
)
from .initialization import RobinParams, robin_from_distances
from .outlyingness import pairwise_distances


@dataclass(frozen=True)
class TrimConfig:
    alpha: float = 0.0

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    def n_keep(self, n: int) -> int:
        return int(math.floor(n * (1 - self.alpha) + 1e-9))


def _trim(trim) -> TrimConfig:
    return trim if isinstance(trim, TrimConfig) else TrimConfig(float(trim))


def _init_centers(X, k, init_indices, w, robin_params):
    if init_indices is not None:
        idx = np.asarray(init_indices, dtype=int)
        if idx.size != k:
            raise ValueError(f"expected {k} initial indices, got {idx.size}")
        return X[idx].copy()
    Xs = X * np.sqrt(w)
    return X[robin_from_distances(Xs, pairwise_distances(Xs), k, robin_params)].copy()


def _prep(X, k):
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k must lie in [1, {X.shape[0]}], got {k}")
    return X


def _lloyd(X, k, centers, w, max_iter, n_keep):
    """Lloyd iterations with optional trimming; returns the final state.

    ``history`` holds the (trimmed) within-cluster sum of squares after
    each center update.
    """
    n = X.shape[0]
    prev = None
    history = []
    repairs = 0
    it = 0
    for it in range(1, max_iter + 1):
        dist = center_distances(X, centers, w)
        assignment = np.argmin(dist, axis=1)
        repairs += _repair_empty(assignment, dist, k)
        keep = _keep_mask(dist[np.arange(n), assignment], n_keep)
        centers = weighted_centers(X, assignment, keep.astype(float), k)
        resid = ((X - centers[assignment]) ** 2).sum(axis=1)
        history.append(float(resid[keep].sum()))
        state = (assignment, keep)
        if prev is not None and all(np.array_equal(a, b) for a, b in zip(state, prev)):
            break
        prev = state
    dist = center_distances(X, centers, w)
    assignment = np.argmin(dist, axis=1)
    repairs += _repair_empty(assignment, dist, k)
    keep = _keep_mask(dist[np.arange(n), assignment], n_keep)
    return assignment, keep, centers, history, it, repairs


def _keep_mask(own: np.ndarray, n_keep: int) -> np.ndarray:
    keep = np.zeros(own.size, dtype=bool)
    keep[np.argsort(own, kind="stable")[:n_keep]] = True
    return keep


def _model(X, k, assignment, keep, centers, w, method, iterations, extras, s=None,
           converged=True, diagnostics=None):
    v = keep.astype(float)
    return ClusterModel(
        k=k, assignment=assignment, centers=centers, v=v, v1=v, v2=v, w=w,
        objective=float(w @ weighted_bcss(X, assignment, v, k)), s=s,
        converged=converged, iterations=iterations, method=method,
        diagnostics=diagnostics or {}, extras=extras,
    )


def kmeans(X, k: int, init_indices=None, max_iter: int = 100,
           robin_params: RobinParams | None = None, w=None) -> ClusterModel:
    """Lloyd's k-means from ROBIN (or given) seeds.

    ``w`` switches to the metric sum_j w_j (x_j - m_j)^2; by default all
    variables count equally. The model reports uniform variable weights
    1/sqrt(p) unless ``w`` is given.
    """
    X = _prep(X, k)
    n, p = X.shape
    w = np.full(p, 1.0 / math.sqrt(p)) if w is None else np.asarray(w, dtype=float)
    centers = _init_centers(X, k, init_indices, w, robin_params)
    assignment, keep, centers, history, it, rep = _lloyd(X, k, centers, w, max_iter, n)
    extras = {"wcss": history[-1], "wcss_history": history}
    return _model(X, k, assignment, keep, centers, w, "kc", it, extras,
                  diagnostics={"empty_cluster_repairs": rep})


def trimmed_kmeans(X, k: int, trim=0.0, max_iter: int = 100, init_indices=None,
                   robin_params: RobinParams | None = None) -> ClusterModel:
    """Trimmed k-means: centers use only the floor(n(1 - alpha)) observations
    closest to their nearest center; the rest are flagged as outliers."""
    trim = _trim(trim)
    X = _prep(X, k)
    n, p = X.shape
    n_keep = trim.n_keep(n)
    if n_keep < k:
        raise ValueError(f"trimming leaves {n_keep} observations for {k} clusters")
    w = np.full(p, 1.0 / math.sqrt(p))
    centers = _init_centers(X, k, init_indices, w, robin_params)
    assignment, keep, centers, history, it, rep = _lloyd(X, k, centers, w, max_iter, n_keep)
    extras = {"alpha": trim.alpha, "untrimmed": np.flatnonzero(keep).tolist(),
              "wcss": history[-1], "wcss_history": history}
    return _model(X, k, assignment, keep, centers, w, "tkc", it, extras,
                  diagnostics={"empty_cluster_repairs": rep})


def _skc_config(k, s, max_iter, outer_max_iter, robin_params, w_tol=1e-4):
    return FitConfig(k=k, s=s, lloyd_max_iter=max_iter, outer_max_iter=outer_max_iter,
                     robin_params=robin_params or RobinParams(), w_tol=w_tol)


def sparse_kmeans(X, k: int, s: float, max_iter: int = 15, outer_max_iter: int = 20,
                  robin_params: RobinParams | None = None) -> ClusterModel:
    """Sparse k-means: weighted Lloyd rounds alternating with the lasso update
    of the variable weights, all observations at weight 1."""
    X = _prep(X, k)
    config = _skc_config(k, s, max_iter, outer_max_iter, robin_params)
    config.validate(X.shape[1])
    ones = np.ones(X.shape[0])

    def make_weigher(w, Ds):
        return lambda assignment, centers: ObservationWeights(ones, ones, ones)

    result, w, converged, outer, diag = sparse_alternation(X, config, make_weigher)
    assignment = weighted_assign(X, result.centers, w)
    centers = weighted_centers(X, assignment, ones, k)
    return _model(X, k, assignment, ones.astype(bool), centers, w, "skc", outer,
                  {}, s=s, converged=converged, diagnostics=diag)


def _double_trim(X, centers, w, n_trim):
    """Indicators of rows kept by the w-metric trim and by the raw trim."""
    n = X.shape[0]
    d_w = center_distances(X, centers, w).min(axis=1)
    d_raw = center_distances(X, centers, np.ones(X.shape[1])).min(axis=1)
    v1 = np.ones(n)
    v2 = np.ones(n)
    if n_trim:
        v1[np.argsort(-d_w, kind="stable")[:n_trim]] = 0.0
        v2[np.argsort(-d_raw, kind="stable")[:n_trim]] = 0.0
    return v1, v2


def robust_sparse_kmeans(X, k: int, s: float, trim=0.1, max_iter: int = 15,
                         outer_max_iter: int = 20, robin_params: RobinParams | None = None,
                         record_history: bool = False) -> ClusterModel:
    """Sparse k-means with trimming in both the weighted and the raw space.

    Each round the alpha share of observations farthest from their closest
    center in the w-metric, and the alpha share farthest in plain Euclidean
    distance, are left out of the center update and of the between-cluster
    sums. The union of both sets is flagged as outliers.
    """
    trim = _trim(trim)
    X = _prep(X, k)
    config = _skc_config(k, s, max_iter, outer_max_iter, robin_params)
    config.validate(X.shape[1])
    n = X.shape[0]
    n_trim = n - trim.n_keep(n)
    if n - n_trim < k:
        raise ValueError(f"trimming leaves {n - n_trim} observations for {k} clusters")
    history = []

    def make_weigher(w, Ds):
        def weigh(assignment, centers):
            v1, v2 = _double_trim(X, centers, w, n_trim)
            if record_history:
                history.append(np.flatnonzero(np.minimum(v1, v2) == 0).tolist())
            return ObservationWeights(v1, v2, np.minimum(v1, v2))
        return weigh

    result, w, converged, outer, diag = sparse_alternation(X, config, make_weigher, center_on="v")
    centers = result.centers
    assignment = weighted_assign(X, centers, w)
    v1, v2 = _double_trim(X, centers, w, n_trim)
    v = np.minimum(v1, v2)
    extras = {"alpha": trim.alpha, "untrimmed": np.flatnonzero(v > 0).tolist()}
    if record_history:
        extras["trim_history"] = history
    model = _model(X, k, assignment, v > 0, weighted_centers(X, assignment, v, k), w,
                   "rskc", outer, extras, s=s, converged=converged, diagnostics=diag)
    model.v1, model.v2 = v1, v2
    return model
