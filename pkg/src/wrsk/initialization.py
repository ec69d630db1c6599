"""ROBIN seeding: dense, mutually distant initial centers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .outlyingness import lof_from_distances, pairwise_distances


@dataclass(frozen=True)
class RobinParams:
    q: int = 10
    lof_accept: float = 1.05

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not self.lof_accept > 1:
            raise ValueError(f"lof_accept must be > 1, got {self.lof_accept}")


def robin_from_distances(X: np.ndarray, D: np.ndarray, k: int,
                         params: RobinParams | None = None) -> np.ndarray:
    """ROBIN on data ``X`` whose pairwise distance matrix is ``D``.

    The first pick is the observation farthest from the coordinate-wise mean
    whose LOF does not exceed ``lof_accept``. Each later pick is the
    observation farthest from the already chosen set that passes the same
    test. When nobody passes, the remaining observation with smallest LOF
    is taken.
    """
    params = params or RobinParams()
    n = D.shape[0]
    if n < 2:
        raise ValueError("ROBIN needs at least 2 observations")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    scores = lof_from_distances(D, min(params.q, n - 1))

    ref = X.mean(axis=0)
    dist = np.sqrt(((X - ref) ** 2).sum(axis=1))
    available = np.ones(n, dtype=bool)
    chosen: list[int] = []
    for _ in range(k):
        # decreasing distance, stable on index for ties
        order = np.lexsort((np.arange(n), -dist))
        order = order[available[order]]
        ok = order[scores[order] <= params.lof_accept]
        pick = int(ok[0]) if ok.size else int(order[np.argmin(scores[order])])
        chosen.append(pick)
        available[pick] = False
        dist = D[pick] if len(chosen) == 1 else np.minimum(dist, D[pick])
    return np.array(chosen, dtype=int)


def robin_init(X, k: int, params: RobinParams | None = None) -> np.ndarray:
    """Return ``k`` distinct row indices of ``X`` to serve as initial centers."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds the number of observations {X.shape[0]}")
    return robin_from_distances(X, pairwise_distances(X), k, params)
