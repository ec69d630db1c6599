"""Weighted robust and sparse k-means.

The fit alternates two steps until the variable weights settle:

1. k-means on the w-scaled data with LOF-based observation weights
   (ROBIN seeding, weighted centers, best-objective iterate kept);
2. a lasso-constrained update of the variable weights from the
   observation-weighted between-cluster sums of squares.

A final pass assigns every observation to its closest center in the
w-metric and flags observations whose weight falls below the cutoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .initialization import RobinParams, robin_from_distances
from .outlyingness import LofParams, cluster_weights, pairwise_distances


@dataclass
class FitConfig:
    k: int
    s: float
    lloyd_max_iter: int = 15
    outer_max_iter: int = 20
    w_tol: float = 1e-4
    outlier_cutoff: float = 0.5
    lof_params: LofParams = field(default_factory=LofParams)
    robin_params: RobinParams = field(default_factory=RobinParams)
    seed: int = 0

    def validate(self, p: int | None = None):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.s > 1:
            raise ValueError(f"s must be > 1, got {self.s}")
        if p is not None and self.s > math.sqrt(p) + 1e-9:
            raise ValueError(f"s={self.s} exceeds sqrt(p)={math.sqrt(p):.4f}")
        if self.lloyd_max_iter < 1 or self.outer_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.outlier_cutoff < 1:
            raise ValueError("outlier_cutoff must lie in (0, 1)")
        if not self.w_tol > 0:
            raise ValueError("w_tol must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        if isinstance(d.get("lof_params"), dict):
            d["lof_params"] = LofParams(**d["lof_params"])
        if isinstance(d.get("robin_params"), dict):
            d["robin_params"] = RobinParams(**d["robin_params"])
        return cls(**d)


@dataclass
class ClusterModel:
    """Result of any fitter in the package.

    ``assignment`` holds 0-based labels in memory; serialized documents use
    1-based labels. ``objective`` is sum_j w_j * vB_j for the final
    assignment and observation weights.
    """

    k: int
    assignment: np.ndarray
    centers: np.ndarray
    v: np.ndarray
    w: np.ndarray
    objective: float
    s: float | None = None
    v1: np.ndarray | None = None
    v2: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0
    outlier_cutoff: float = 0.5
    seed: int | None = None
    method: str = "wrsk"
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def outliers(self) -> np.ndarray:
        return classify_outliers(self.v, self.outlier_cutoff)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "method": self.method,
            "k": int(self.k),
            "s": None if self.s is None else float(self.s),
            "assignment": (np.asarray(self.assignment) + 1).tolist(),
            "v": arr(self.v),
            "v1": arr(self.v1),
            "v2": arr(self.v2),
            "w": arr(self.w),
            "centers": arr(self.centers),
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "outlier_cutoff": float(self.outlier_cutoff),
            "outliers": self.outliers.tolist(),
            "seed": self.seed,
            "diagnostics": _jsonable(self.diagnostics),
            "extras": _jsonable(self.extras),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        def arr(key):
            return None if d.get(key) is None else np.asarray(d[key], dtype=float)

        return cls(
            k=int(d["k"]),
            assignment=np.asarray(d["assignment"], dtype=int) - 1,
            centers=arr("centers"),
            v=arr("v"),
            w=arr("w"),
            objective=float(d["objective"]),
            s=d.get("s"),
            v1=arr("v1"),
            v2=arr("v2"),
            converged=bool(d.get("converged", True)),
            iterations=int(d.get("iterations", 0)),
            outlier_cutoff=float(d.get("outlier_cutoff", 0.5)),
            seed=d.get("seed"),
            method=d.get("method", "wrsk"),
            diagnostics=d.get("diagnostics", {}),
            extras=d.get("extras", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# kernels


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def center_distances(X, centers, w) -> np.ndarray:
    """n x k matrix of sum_j w_j (x_ij - m_jr)^2."""
    X = _as_matrix(X)
    centers = _as_matrix(centers)
    w = np.asarray(w, dtype=float)
    active = w > 0
    Xa, Ca, wa = X[:, active], centers[:, active], w[active]
    out = np.empty((X.shape[0], centers.shape[0]))
    for r in range(centers.shape[0]):
        out[:, r] = ((Xa - Ca[r]) ** 2) @ wa
    return out


def _repair_empty(assignment: np.ndarray, dist: np.ndarray, k: int) -> int:
    """Move the observation farthest from its own center into each empty cluster."""
    n = assignment.size
    repairs = 0
    for r in range(k):
        if np.any(assignment == r):
            continue
        counts = np.bincount(assignment, minlength=k)
        own = dist[np.arange(n), assignment]
        movable = counts[assignment] > 1
        if not movable.any():
            break
        i = int(np.argmax(np.where(movable, own, -np.inf)))
        assignment[i] = r
        repairs += 1
    return repairs


def weighted_assign(X, centers, w, return_repairs: bool = False):
    """Nearest center in the w-metric; ties go to the smallest cluster index.

    A cluster left empty is reseeded with the observation lying farthest
    from its own center.
    """
    dist = center_distances(X, centers, w)
    assignment = np.argmin(dist, axis=1)
    repairs = _repair_empty(assignment, dist, dist.shape[1])
    return (assignment, repairs) if return_repairs else assignment


def _onehot(assignment, k) -> np.ndarray:
    H = np.zeros((assignment.size, k))
    H[np.arange(assignment.size), assignment] = 1.0
    return H


def weighted_centers(X, assignment, v, k: int | None = None) -> np.ndarray:
    """Per-cluster v-weighted means; unweighted mean if a cluster's weights sum to 0."""
    X = _as_matrix(X)
    assignment = np.asarray(assignment, dtype=int)
    v = np.asarray(v, dtype=float)
    k = int(assignment.max()) + 1 if k is None else k
    H = _onehot(assignment, k)
    Hv = H * v[:, None]
    sums = Hv.sum(axis=0)
    zero = sums <= 0
    if zero.any():
        Hv[:, zero] = H[:, zero]
        sums = Hv.sum(axis=0)
    sums[sums == 0] = 1.0
    return (Hv.T @ X) / sums[:, None]


def weighted_ss_components(X, assignment, v, k: int | None = None):
    """Per-variable (total SS about the v-weighted grand mean, within SS)."""
    X = _as_matrix(X)
    v = np.asarray(v, dtype=float)
    assignment = np.asarray(assignment, dtype=int)
    vs = v.sum()
    grand = (v @ X) / vs if vs > 0 else X.mean(axis=0)
    total = v @ (X - grand) ** 2
    centers = weighted_centers(X, assignment, v, k)
    within = v @ (X - centers[assignment]) ** 2
    return total, within


def weighted_bcss(X, assignment, v, k: int | None = None) -> np.ndarray:
    """Observation-weighted between-cluster sum of squares per variable, clamped at 0."""
    total, within = weighted_ss_components(X, assignment, v, k)
    return np.maximum(total - within, 0.0)


def classify_outliers(v, cutoff: float = 0.5) -> np.ndarray:
    return np.asarray(v, dtype=float) < cutoff


# ---------------------------------------------------------------------------
# variable weights


def soft_threshold(a, delta: float) -> np.ndarray:
    if delta < 0:
        raise ValueError("delta must be >= 0")
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - delta, 0.0)


def _normalized(a: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(a)
    return a / nrm if nrm > 0 else np.zeros_like(a)


def lasso_weights(b, s: float, tol: float = 1e-8, max_steps: int = 60):
    """Solve max_w w.b subject to ||w||_2 <= 1, ||w||_1 <= s, w >= 0.

    Returns ``(w, flag)`` where flag is ``None``, ``"uniform"`` (b carries
    no information; w is constant and feasible) or ``"stall"`` (tied maxima
    keep the l1 norm above s for every threshold, and the thresholded
    vector is rescaled instead).
    """
    b = np.asarray(b, dtype=float)
    p = b.size
    if not np.any(b > 0):
        # uniform direction, shrunk onto the l1 budget when s < sqrt(p)
        return np.full(p, min(1.0 / math.sqrt(p), s / p)), "uniform"
    b = np.maximum(b, 0.0)
    w = _normalized(b)
    if w.sum() <= s:
        return w, None
    lo, hi = 0.0, float(b.max())
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        l1 = _normalized(soft_threshold(b, mid)).sum()
        if abs(l1 - s) < tol:
            hi = mid
            break
        if l1 > s:
            lo = mid
        else:
            hi = mid
    w = _normalized(soft_threshold(b, hi))
    if w.sum() > 0:
        return w, None
    w = _normalized(soft_threshold(b, lo))
    return w * (s / w.sum()), "stall"


def update_variable_weights(b, s: float) -> np.ndarray:
    """Variable weights maximizing sum_j w_j b_j over the lasso constraint set."""
    return lasso_weights(b, s)[0]


# ---------------------------------------------------------------------------
# step 1


@dataclass
class ObservationWeights:
    v1: np.ndarray
    v2: np.ndarray
    v: np.ndarray
    step_fallback: bool = False


def _scaled(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    active = w > 0
    return X[:, active] * w[active]


def compute_observation_weights(X, w, assignment, lof_params: LofParams | None = None,
                                raw_distances: np.ndarray | None = None,
                                scaled_distances: np.ndarray | None = None,
                                raw_cache: dict | None = None,
                                scaled_cache: dict | None = None) -> ObservationWeights:
    """LOF-based weights per cluster on w-scaled rows (v1) and raw rows (v2).

    The combined weight is the elementwise minimum. The optional caches
    memoize per-cluster weights by member set.
    """
    X = _as_matrix(X)
    w = np.asarray(w, dtype=float)
    params = lof_params or LofParams()
    if scaled_distances is None:
        scaled_distances = pairwise_distances(_scaled(X, w))
    if raw_distances is None:
        raw_distances = pairwise_distances(X)
    v1, f1 = cluster_weights(scaled_distances, assignment, params, scaled_cache)
    v2, f2 = cluster_weights(raw_distances, assignment, params, raw_cache)
    return ObservationWeights(v1, v2, np.minimum(v1, v2), f1 or f2)


@dataclass
class Step1Result:
    assignment: np.ndarray
    centers: np.ndarray
    weights: ObservationWeights
    objective: float
    iterations: int
    history: list = field(default_factory=list)
    repairs: int = 0

    @property
    def v(self):
        return self.weights.v


Weigher = Callable[[np.ndarray, np.ndarray], ObservationWeights]


def run_step1(X: np.ndarray, w: np.ndarray, k: int, lloyd_max_iter: int,
              weigh: Weigher, init_centers: np.ndarray,
              center_on: str = "v1") -> Step1Result:
    """Weighted Lloyd rounds from ``init_centers``, keeping the best iterate.

    Each round assigns, recomputes observation weights through ``weigh``,
    updates centers with the ``center_on`` weights and scores
    sum_j w_j * B_j under those same weights.
    """
    centers = np.array(init_centers, dtype=float)
    best: Step1Result | None = None
    prev = None
    history = []
    repairs = 0
    for it in range(1, lloyd_max_iter + 1):
        assignment, rep = weighted_assign(X, centers, w, return_repairs=True)
        repairs += rep
        ow = weigh(assignment, centers)
        cv = ow.v1 if center_on == "v1" else ow.v
        centers = weighted_centers(X, assignment, cv, k)
        obj = float(w @ weighted_bcss(X, assignment, cv, k))
        history.append(obj)
        if best is None or obj > best.objective:
            best = Step1Result(assignment.copy(), centers.copy(), ow, obj, it)
        if prev is not None and np.array_equal(assignment, prev):
            break
        prev = assignment
    best.iterations = it
    best.history = history
    best.repairs = repairs
    return best


def _lof_weigher(X, w, params: LofParams, raw_distances, scaled_distances=None,
                 raw_cache: dict | None = None) -> Weigher:
    if scaled_distances is None:
        scaled_distances = pairwise_distances(_scaled(X, w))
    scaled_cache: dict = {}

    def weigh(assignment, centers):
        return compute_observation_weights(X, w, assignment, params, raw_distances,
                                           scaled_distances, raw_cache, scaled_cache)

    return weigh


def step1(X, w, k: int, config: FitConfig, raw_distances: np.ndarray | None = None,
          init_centers: np.ndarray | None = None,
          force_unit_weights: bool = False) -> Step1Result:
    """Robust weighted k-means for fixed variable weights ``w``.

    Seeds with ROBIN on the w-scaled data unless ``init_centers`` is given.
    ``force_unit_weights`` pins every observation weight to 1, which reduces
    a round to a plain Lloyd round in the w-metric.
    """
    X = _as_matrix(X)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("w must be nonnegative and not all zero")
    Xs = _scaled(X, w)
    Ds = pairwise_distances(Xs)
    if init_centers is None:
        init_centers = X[robin_from_distances(Xs, Ds, k, config.robin_params)]
    if force_unit_weights:
        ones = np.ones(X.shape[0])

        def weigh(assignment, centers):
            return ObservationWeights(ones, ones, ones)
    else:
        if raw_distances is None:
            raw_distances = pairwise_distances(X)
        weigh = _lof_weigher(X, w, config.lof_params, raw_distances, Ds)
    return run_step1(X, w, k, config.lloyd_max_iter, weigh, init_centers)


# ---------------------------------------------------------------------------
# full fit


def _check_data(X, k: int) -> np.ndarray:
    X = _as_matrix(X)
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    n = X.shape[0]
    if n <= k:
        raise ValueError(f"need more observations than clusters (n={n}, k={k})")
    if np.all(X == X[0]):
        raise ValueError("all observations are identical; no cluster structure to fit")
    return X


def w_change(w_new: np.ndarray, w_old: np.ndarray) -> float:
    return float(np.abs(w_new - w_old).sum() / np.abs(w_old).sum())


def sparse_alternation(X: np.ndarray, config: FitConfig,
                       make_weigher: Callable[[np.ndarray, np.ndarray], Weigher],
                       center_on: str = "v1"):
    """Shared outer loop: step 1 under the current w, then the lasso update.

    ``make_weigher(w, D)`` builds the observation weighting used inside step 1;
    ``D`` holds pairwise distances of the w-scaled rows.
    Returns the last step-1 result, the final w and loop diagnostics.
    """
    n, p = X.shape
    k = config.k
    w = np.full(p, 1.0 / math.sqrt(p))
    diag = {"uniform_w_fallback": False, "lasso_stall": False,
            "biweight_step_fallback": False, "empty_cluster_repairs": 0}
    converged = False
    outer = 0
    result = None
    for outer in range(1, config.outer_max_iter + 1):
        Xs = _scaled(X, w)
        Ds = pairwise_distances(Xs)
        init = X[robin_from_distances(Xs, Ds, k, config.robin_params)]
        result = run_step1(X, w, k, config.lloyd_max_iter, make_weigher(w, Ds), init, center_on)
        diag["empty_cluster_repairs"] += result.repairs
        diag["biweight_step_fallback"] |= result.weights.step_fallback
        b = weighted_bcss(X, result.assignment, result.weights.v, k)
        w_new, flag = lasso_weights(b, config.s)
        if flag == "uniform":
            diag["uniform_w_fallback"] = True
        elif flag == "stall":
            diag["lasso_stall"] = True
        change = w_change(w_new, w)
        w = w_new
        if change < config.w_tol:
            converged = True
            break
    return result, w, converged, outer, diag


def fit(X, config: FitConfig) -> ClusterModel:
    """Fit weighted robust and sparse k-means to the rows of ``X``."""
    X = _as_matrix(X)
    config.validate(X.shape[1])
    X = _check_data(X, config.k)
    k = config.k
    D_raw = pairwise_distances(X)
    raw_cache: dict = {}

    def make_weigher(w, Ds):
        return _lof_weigher(X, w, config.lof_params, D_raw, Ds, raw_cache)

    result, w, converged, outer, diag = sparse_alternation(X, config, make_weigher)

    assignment, rep = weighted_assign(X, result.centers, w, return_repairs=True)
    diag["empty_cluster_repairs"] += rep
    ow = compute_observation_weights(X, w, assignment, config.lof_params,
                                     raw_distances=D_raw, raw_cache=raw_cache)
    diag["biweight_step_fallback"] |= ow.step_fallback
    centers = weighted_centers(X, assignment, ow.v, k)
    objective = float(w @ weighted_bcss(X, assignment, ow.v, k))
    return ClusterModel(
        k=k, assignment=assignment, centers=centers, v=ow.v, v1=ow.v1, v2=ow.v2,
        w=w, objective=objective, s=config.s, converged=converged, iterations=outer,
        outlier_cutoff=config.outlier_cutoff, seed=config.seed, method="wrsk",
        diagnostics=diag,
    )
