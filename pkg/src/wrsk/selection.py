"""Permutation gap statistics and the joint choice of (k, s).

The null reference for every statistic is the data with each column
permuted independently. Each grid cell (k, s) draws its own permutations
from a stream keyed by (seed, k, s, a), so cells can be evaluated in any
order or in parallel and still give the same table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import kmeans, robust_sparse_kmeans, sparse_kmeans
from .core import FitConfig, fit

LOG_FLOOR = 1e-12


def default_s_grid(p: int, start: float = 1.1, step: float = 0.5) -> list[float]:
    """1.1, 1.6, 2.1, ... up to sqrt(p)."""
    top = math.sqrt(p)
    grid = []
    i = 0
    while start + i * step <= top + 1e-9:
        grid.append(round(start + i * step, 10))
        i += 1
    return grid


def permute_columns(X, rng: np.random.Generator) -> np.ndarray:
    """Copy of ``X`` with every column shuffled independently."""
    X = np.asarray(X, dtype=float)
    out = np.empty_like(X)
    for j in range(X.shape[1]):
        out[:, j] = X[rng.permutation(X.shape[0]), j]
    return out


def cell_rng(seed: int, k: int, s: float, a: int) -> np.random.Generator:
    s_key = int(round(s * 1_000_000))
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k), s_key, int(a)]))


def _safe_log(x: float) -> tuple[float, bool]:
    if x <= LOG_FLOOR or not np.isfinite(x):
        return math.log(LOG_FLOOR), True
    return math.log(x), False


def standard_error(values, se_factor: bool = True) -> float:
    values = np.asarray(values, dtype=float)
    A = values.size
    sd = float(values.std(ddof=1)) if A > 1 else 0.0
    return sd * math.sqrt(1 + 1 / A) if se_factor else sd


@dataclass
class GapEntry:
    k: int
    s: float
    gap: float
    se: float
    observed_log: float
    mean_perm_log: float
    perm_logs: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


# fitters take (X, k, s, options) and return a ClusterModel


def _fit_wrsk(X, k, s, options):
    base = options.get("config") or FitConfig(k=k, s=s)
    return fit(X, replace(base, k=k, s=s))


def _fit_rskc(X, k, s, options):
    return robust_sparse_kmeans(X, k, s, trim=options.get("alpha", 0.1))


def _fit_skc(X, k, s, options):
    return sparse_kmeans(X, k, s)


FITTERS = {"wrsk": _fit_wrsk, "rskc": _fit_rskc, "skc": _fit_skc}


def gap_statistic(X, k: int, s: float, A: int, seed: int = 0, method: str = "wrsk",
                  options: dict | None = None, se_factor: bool = True) -> GapEntry:
    """Gap of the weighted objective for one (k, s) cell.

    gap = log(objective on X) - mean_a log(objective on permuted copy a).
    """
    if A < 2:
        raise ValueError("need at least 2 permuted datasets")
    options = options or {}
    fitter = FITTERS[method]
    X = np.asarray(X, dtype=float)
    flags = []
    obs_log, floored = _safe_log(fitter(X, k, s, options).objective)
    if floored:
        flags.append("observed_objective_floored")
    logs = []
    for a in range(A):
        Xa = permute_columns(X, cell_rng(seed, k, s, a))
        lg, floored = _safe_log(fitter(Xa, k, s, options).objective)
        if floored and "permuted_objective_floored" not in flags:
            flags.append("permuted_objective_floored")
        logs.append(lg)
    mean_log = float(np.mean(logs))
    return GapEntry(k=k, s=s, gap=obs_log - mean_log, se=standard_error(logs, se_factor),
                    observed_log=obs_log, mean_perm_log=mean_log, perm_logs=logs, flags=flags)


def gap_wrsk(X, k: int, s: float, A: int = 10, base_config: FitConfig | None = None,
             seed: int | None = None, se_factor: bool = True) -> GapEntry:
    """Modified gap statistic of the weighted robust sparse k-means objective."""
    if seed is None:
        seed = base_config.seed if base_config is not None else 0
    return gap_statistic(X, k, s, A, seed, "wrsk", {"config": base_config}, se_factor)


@dataclass
class GapTable:
    entries: dict
    A: int
    k_grid: list[int]
    s_grid: list[float]
    method: str = "wrsk"

    def entry(self, k: int, s: float) -> GapEntry:
        return self.entries[(k, s)]

    def rows(self) -> list[GapEntry]:
        return [self.entries[(k, s)] for k in self.k_grid for s in self.s_grid]

    def for_k(self, k: int) -> list[tuple[float, float, float]]:
        return [(s, self.entries[(k, s)].gap, self.entries[(k, s)].se) for s in self.s_grid]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "s", "gap", "se", "observed_log", "mean_perm_log", "flags"])
        for e in self.rows():
            writer.writerow([e.k, repr(float(e.s)), repr(e.gap), repr(e.se), repr(e.observed_log),
                             repr(e.mean_perm_log), ";".join(e.flags)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "method": self.method, "A": self.A, "k_grid": self.k_grid, "s_grid": self.s_grid,
            "entries": [e.__dict__ for e in self.rows()],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _run_cell(args) -> GapEntry:
    X, k, s, A, seed, method, options, se_factor = args
    return gap_statistic(X, k, s, A, seed, method, options, se_factor)


def gap_table(X, k_grid, s_grid=None, A: int = 10, seed: int = 0, method: str = "wrsk",
              options: dict | None = None, se_factor: bool = True, jobs: int = 1) -> GapTable:
    """Evaluate the gap statistic on every (k, s) cell of the grid."""
    X = np.asarray(X, dtype=float)
    k_grid = [int(k) for k in k_grid]
    s_grid = default_s_grid(X.shape[1]) if s_grid is None else [float(s) for s in s_grid]
    if not s_grid:
        raise ValueError("empty s grid")
    cells = [(X, k, s, A, seed, method, options, se_factor) for k in k_grid for s in s_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    entries = {(e.k, e.s): e for e in results}
    return GapTable(entries, A, k_grid, s_grid, method)


def select_s(gaps_for_fixed_k) -> float:
    """Smallest s whose gap is within one standard error of the best gap.

    ``gaps_for_fixed_k`` is a sequence of (s, gap, se).
    """
    rows = sorted(gaps_for_fixed_k, key=lambda r: r[0])
    if not rows:
        raise ValueError("empty gap list")
    best = max(range(len(rows)), key=lambda i: (rows[i][1], -i))
    threshold = rows[best][1] - rows[best][2]
    for s, gap, _ in rows:
        if gap >= threshold:
            return s
    return rows[best][0]


def select_k(table: GapTable) -> tuple[int, float]:
    """(k*, s*): per k pick s by :func:`select_s`, then the k with the largest gap."""
    best = None
    for k in sorted(table.k_grid):
        s_star = select_s(table.for_k(k))
        gap = table.entry(k, s_star).gap
        if best is None or gap > best[2]:
            best = (k, s_star, gap)
    return best[0], best[1]


@dataclass
class ClassicGapResult:
    k_star: int
    k_grid: list[int]
    gaps: list[float]
    ses: list[float]
    rule_satisfied: bool


def classic_rule(k_grid, gaps, ses) -> tuple[int, bool]:
    """Smallest k with Gap_k >= Gap_{k+1} - se_{k+1}; largest k if none."""
    for i in range(len(k_grid) - 1):
        if gaps[i] >= gaps[i + 1] - ses[i + 1]:
            return k_grid[i], True
    return k_grid[-1], len(k_grid) == 1


def _per_variable_wcss(X, model) -> np.ndarray:
    resid = X - model.centers[model.assignment]
    return (resid**2).sum(axis=0)


def gap_k_classic(X, k_grid, A: int = 10, w_fixed=None, seed: int = 0,
                  robin_params=None, se_factor: bool = True) -> ClassicGapResult:
    """Gap statistic over k for plain k-means with ROBIN seeding.

    Gap_k = sum_j w_j (mean_a log aW_j - log W_j), with W_j the per-variable
    within-cluster sum of squares and w fixed (all ones by default).
    """
    X = np.asarray(X, dtype=float)
    k_grid = [int(k) for k in k_grid]
    if any(b - a != 1 for a, b in zip(k_grid, k_grid[1:])):
        raise ValueError("k_grid must be contiguous and ascending")
    p = X.shape[1]
    w = np.ones(p) if w_fixed is None else np.asarray(w_fixed, dtype=float)

    def score(data, k):
        model = kmeans(data, k, robin_params=robin_params, w=w)
        return float(w @ np.log(np.maximum(_per_variable_wcss(data, model), LOG_FLOOR)))

    gaps, ses = [], []
    for k in k_grid:
        obs = score(X, k)
        logs = [score(permute_columns(X, cell_rng(seed, k, 0.0, a)), k) for a in range(A)]
        gaps.append(float(np.mean(logs)) - obs)
        ses.append(standard_error(logs, se_factor))
    k_star, ok = classic_rule(k_grid, gaps, ses)
    return ClassicGapResult(k_star, k_grid, gaps, ses, ok)
