"""Local outlier factor scores and the observation weighting function.

Scores are computed from exact pairwise Euclidean distances. Ties at the
q-distance are kept, so a neighborhood can hold more than ``q`` members.
The weighting function standardizes LOF within a member set and maps it
through a translated biweight onto [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

MAD_SCALE = 1.4826


@dataclass(frozen=True)
class LofParams:
    """Settings for LOF scoring and the biweight mapping.

    ``q`` is the neighborhood size and ``c`` the truncation point of the
    biweight. ``epsilon_density`` caps the local reachability density of
    observations whose reachability sum is zero (exact duplicates).
    """

    q: int = 10
    c: float = 2.0
    epsilon_density: float = 1e-10
    scaled_mad: bool = True

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not self.c > 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if not self.epsilon_density > 0:
            raise ValueError("epsilon_density must be > 0")


@dataclass
class NeighborTable:
    """q-nearest neighborhoods, one entry per observation.

    ``indices[i]`` and ``distances[i]`` are sorted by distance (then by
    index). ``kdist[i]`` is the q-distance of observation i.
    """

    q: int
    indices: list[np.ndarray]
    distances: list[np.ndarray]
    kdist: np.ndarray
    mask: np.ndarray = field(repr=False)


@dataclass
class BiweightResult:
    weights: np.ndarray
    M: float
    step_fallback: bool = False


def pairwise_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return cdist(X, X)


def _check_q(n: int, q: int):
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    if not 1 <= q <= n - 1:
        raise ValueError(f"q must lie in [1, {n - 1}], got {q}")


def neighbors_from_distances(D: np.ndarray, q: int) -> NeighborTable:
    """Neighbor table from a precomputed symmetric distance matrix."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    _check_q(n, q)
    Dx = D.copy()
    np.fill_diagonal(Dx, np.inf)
    kdist = np.partition(Dx, q - 1, axis=1)[:, q - 1]
    mask = Dx <= kdist[:, None]
    indices, distances = [], []
    for i in range(n):
        idx = np.flatnonzero(mask[i])
        order = np.lexsort((idx, Dx[i, idx]))
        indices.append(idx[order])
        distances.append(Dx[i, idx[order]])
    return NeighborTable(q=q, indices=indices, distances=distances, kdist=kdist, mask=mask)


def knn(X, q: int) -> NeighborTable:
    """Exact q-nearest neighborhoods of the rows of ``X``.

    Every observation closer than the q-distance is listed, and so is every
    observation tied at it.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _check_q(X.shape[0], q)
    return neighbors_from_distances(pairwise_distances(X), q)


def lof_from_distances(D: np.ndarray, q: int, epsilon_density: float = 1e-10) -> np.ndarray:
    """LOF scores given a pairwise distance matrix ``D``."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    _check_q(n, q)
    Dx = D.copy()
    np.fill_diagonal(Dx, np.inf)
    kdist = np.partition(Dx, q - 1, axis=1)[:, q - 1]
    mask = Dx <= kdist[:, None]
    counts = mask.sum(axis=1)
    # reach-dist(i <- j) = max(kdist_j, d(i, j))
    reach = np.maximum(kdist[None, :], D)
    reach_sum = np.where(mask, reach, 0.0).sum(axis=1)
    capped = reach_sum <= 0
    lrd = np.empty(n)
    lrd[~capped] = counts[~capped] / reach_sum[~capped]
    lrd[capped] = 1.0 / epsilon_density
    neighbor_lrd = (mask * lrd[None, :]).sum(axis=1) / counts
    return neighbor_lrd / lrd


def lof(X, q: int = 10, params: LofParams | None = None) -> np.ndarray:
    """Local outlier factor of each row of ``X``.

    Scores near 1 mark observations in regions of homogeneous density;
    scores well above 1 mark isolated observations.
    """
    params = params or LofParams(q=q)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _check_q(X.shape[0], q)
    return lof_from_distances(pairwise_distances(X), q, params.epsilon_density)


def _member_array(scores, member_index_set):
    scores = np.asarray(scores, dtype=float)
    idx = np.asarray(list(member_index_set) if not isinstance(member_index_set, np.ndarray)
                     else member_index_set)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("member set must be nonempty")
    return scores, idx.astype(int)


def standardize_lof(scores, member_index_set=None) -> np.ndarray:
    """Z-score the LOF values of a member set (sample sd, n - 1).

    Returns one value per member, in member order. A member set with zero
    spread standardizes to all zeros.
    """
    scores = np.asarray(scores, dtype=float)
    if member_index_set is None:
        member_index_set = np.arange(scores.size)
    scores, idx = _member_array(scores, member_index_set)
    vals = scores[idx]
    if vals.size < 2:
        return np.zeros(vals.size)
    mean = vals.mean()
    sd = vals.std(ddof=1)
    if not np.isfinite(sd) or sd <= 1e-12 * max(1.0, abs(mean)):
        return np.zeros(vals.size)
    return (vals - mean) / sd


def _median(x: np.ndarray) -> float:
    # np.median carries heavy overhead on the short vectors used here
    s = np.sort(x)
    m = s.size // 2
    return float(s[m]) if s.size % 2 else float(0.5 * (s[m - 1] + s[m]))


def mad(x, scaled: bool = True) -> float:
    x = np.asarray(x, dtype=float)
    raw = _median(np.abs(x - _median(x)))
    return MAD_SCALE * raw if scaled else raw


def biweight_threshold(lofstar, scaled_mad: bool = True) -> float:
    """Lower knee M = median + MAD of the standardized scores."""
    lofstar = np.asarray(lofstar, dtype=float)
    return _median(lofstar) + mad(lofstar, scaled_mad)


def translated_biweight(lofstar, M: float, c: float) -> np.ndarray:
    """Weights 1 below ``M``, 0 above ``c``, quartic taper in between."""
    x = np.asarray(lofstar, dtype=float)
    if c <= M:
        return np.where(x <= M, 1.0, 0.0)
    u = (x - M) / (c - M)
    w = (1.0 - u**2) ** 2
    w = np.where(x <= M, 1.0, w)
    return np.where(x >= c, 0.0, w)


def biweight(lofstar, member_index_set=None, c: float = 2.0,
             scaled_mad: bool = True) -> BiweightResult:
    """Map standardized LOF values of a member set to weights in [0, 1].

    If the spread is so large that ``c <= M`` the mapping degrades to a step
    at ``M`` and ``step_fallback`` is set.
    """
    lofstar = np.asarray(lofstar, dtype=float)
    if member_index_set is None:
        member_index_set = np.arange(lofstar.size)
    lofstar, idx = _member_array(lofstar, member_index_set)
    vals = lofstar[idx]
    M = biweight_threshold(vals, scaled_mad)
    return BiweightResult(translated_biweight(vals, M, c), M, step_fallback=c <= M)


def member_weights(D: np.ndarray, params: LofParams) -> tuple[np.ndarray, bool]:
    """Observation weights for one member set given its distance block.

    Lowers ``q`` to ``size - 1`` for small sets; a singleton gets weight 1.
    Returns the weights and whether the step fallback fired.
    """
    m = D.shape[0]
    if m == 1:
        return np.ones(1), False
    q = min(params.q, m - 1)
    z = standardize_lof(lof_from_distances(D, q, params.epsilon_density))
    M = biweight_threshold(z, params.scaled_mad)
    return translated_biweight(z, M, params.c), params.c <= M


def cluster_weights(D: np.ndarray, assignment, params: LofParams,
                    cache: dict | None = None) -> tuple[np.ndarray, bool]:
    """Apply :func:`member_weights` cluster by cluster.

    ``D`` is the full pairwise distance matrix of the data the weights are
    computed in; each cluster uses its own diagonal block. ``cache`` maps a
    member set to its weights and must only be shared between calls on the
    same ``D``.
    """
    assignment = np.asarray(assignment)
    v = np.ones(assignment.size)
    flagged = False
    order = np.argsort(assignment, kind="stable")
    bounds = np.flatnonzero(np.diff(assignment[order])) + 1
    for idx in np.split(order, bounds):
        key = idx.tobytes() if cache is not None else None
        if key is not None and key in cache:
            w, f = cache[key]
        else:
            w, f = member_weights(D[np.ix_(idx, idx)], params)
            if key is not None:
                cache[key] = (w, f)
        v[idx] = w
        flagged |= f
    return v, flagged
