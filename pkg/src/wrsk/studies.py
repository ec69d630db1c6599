"""Simulation study presets and the method comparison runner.

Each preset expands into a list of settings (one :class:`SimConfig`
template per setting). ``scale`` shrinks group sizes and dimensions
proportionally so the studies can run at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .baselines import kmeans, robust_sparse_kmeans, sparse_kmeans, trimmed_kmeans
from .core import ClusterModel, FitConfig, fit
from .evaluation import EvalReport, cer, evaluate, evaluate_dataset
from .selection import default_s_grid, gap_table, select_k, select_s
from .simgen import SimConfig, SimDataset, generate

METHODS = ("wrsk", "kc", "tkc", "skc", "rskc")
SPARSE_METHODS = ("wrsk", "skc", "rskc")
DEFAULT_REAL_ALPHA = 0.10
LADDER = ((0.0, 0.0), (0.05, 0.0), (0.10, 0.10), (0.15, 0.10), (0.20, 0.10),
          (0.30, 0.10), (0.40, 0.10))


@dataclass
class StudySetting:
    label: str
    template: SimConfig
    k_grid: list[int]
    known_k: bool = False


def _scaled(x: int, scale: float, floor: int = 1) -> int:
    return max(floor, int(round(x * scale)))


def _sizes(lo: int, hi: int, scale: float) -> tuple[int, int]:
    lo_s = _scaled(lo, scale, 5)
    return lo_s, max(lo_s, _scaled(hi, scale, 5))


def study_settings(study: int, scale: float = 1.0) -> list[StudySetting]:
    """Settings of simulation study 1, 2 or 3 at the given scale."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    if study == 1:
        out = []
        for g in (3, 4, 5):
            cfg = SimConfig(g=g, size_range=_sizes(50, 150, scale),
                            p_inf=_scaled(50, scale, g), p_noise=_scaled(750, scale, 1),
                            outlier_frac_inf=0.10, outlier_frac_noise=0.10,
                            noise_contam_var_frac=0.10)
            out.append(StudySetting(f"g={g}", cfg, list(range(2, 8))))
        return out
    if study == 2:
        out = []
        for f_inf, f_noise in LADDER:
            cfg = SimConfig(g=3, size_range=_sizes(50, 150, scale),
                            p_inf=_scaled(170, scale, 3), p_noise=_scaled(830, scale, 1),
                            outlier_frac_inf=f_inf, outlier_frac_noise=f_noise,
                            noise_contam_var_frac=0.10)
            out.append(StudySetting(f"{round(100 * f_inf)}/{round(100 * f_noise)}", cfg,
                                    list(range(2, 7))))
        return out
    if study == 3:
        out = []
        p = _scaled(4000, scale, 10)
        for share in (0.01, 0.02, 0.05):
            p_inf = max(4, int(round(share * p)))
            cfg = SimConfig(g=4, size_range=_sizes(15, 150, scale), p_inf=p_inf,
                            p_noise=p - p_inf, outlier_frac_inf=0.20,
                            outlier_frac_noise=0.10, noise_contam_var_frac=0.20,
                            inf_contam_var_frac=0.20, outlier_kind_inf="uniform")
            out.append(StudySetting(f"inf={round(100 * share)}%", cfg, [4], known_k=True))
        return out
    raise ValueError(f"unknown study {study!r}; choose 1, 2 or 3")


def replicate_seed(seed: int, setting: int, replicate: int) -> int:
    """Dataset seed for one (setting, replicate) pair of a study run."""
    return int(np.random.SeedSequence([int(seed), int(setting), int(replicate)])
               .generate_state(1, dtype=np.uint32)[0])


def replicate_configs(settings: list[StudySetting], replicates: int, seed: int):
    """Yield (setting index, replicate index, config) for every dataset."""
    for i, st in enumerate(settings):
        for r in range(replicates):
            yield i, r, replace(st.template, seed=replicate_seed(seed, i, r))


# comparison runner


def fit_method(method: str, X, k: int, s: float | None = None, alpha: float = 0.0,
               seed: int = 0) -> ClusterModel:
    """Fit one of the five methods. ``s`` is required by the sparse ones."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in SPARSE_METHODS and s is None:
        raise ValueError(f"method {method} needs s")
    if method == "wrsk":
        return fit(X, FitConfig(k=k, s=s, seed=seed))
    if method == "kc":
        return kmeans(X, k)
    if method == "tkc":
        return trimmed_kmeans(X, k, trim=alpha)
    if method == "skc":
        return sparse_kmeans(X, k, s)
    return robust_sparse_kmeans(X, k, s, trim=alpha)


def oracle_s(method: str, X, labels, k: int, s_grid, alpha: float = 0.0,
             seed: int = 0) -> tuple[float, ClusterModel]:
    """The grid value of s with the lowest CER against known labels
    (ties to the smaller s), and the model fitted there."""
    best = None
    for s in sorted(s_grid):
        model = fit_method(method, X, k, s, alpha, seed)
        score = cer(labels, model.assignment)
        if best is None or score < best[0]:
            best = (score, s, model)
    return best[1], best[2]


def gap_s(method: str, X, k: int, s_grid, A: int, seed: int, alpha: float,
          jobs: int = 1) -> float:
    """s chosen by the one-standard-error gap rule at fixed k."""
    options = {"alpha": alpha, "config": FitConfig(k=k, s=s_grid[0], seed=seed)}
    table = gap_table(X, [k], s_grid, A=A, seed=seed, method=method, options=options, jobs=jobs)
    return select_s(table.for_k(k))


@dataclass
class CompareRow:
    method: str
    k: int
    s: float | None
    alpha: float | None
    report: EvalReport

    def csv_row(self) -> list[str]:
        return [self.method, str(self.k), "" if self.s is None else repr(float(self.s)),
                "" if self.alpha is None else repr(float(self.alpha))] + self.report.csv_row()

    @staticmethod
    def csv_header() -> list[str]:
        return ["method", "k", "s", "alpha"] + EvalReport.csv_header()


def compare(X, k: int, methods=METHODS, s: float | None = None, alpha: float | None = None,
            labels=None, outlier_truth=None, informative_indices=None, s_grid=None,
            A: int = 10, seed: int = 0, jobs: int = 1) -> list[CompareRow]:
    """Run every requested method at known k and report the metrics.

    The sparse methods use ``s`` when given; otherwise the oracle s when
    labels are known and the gap rule when they are not. Trimming methods
    default to the true outlier share when known, else 0.10.
    """
    X = np.asarray(X, dtype=float)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if alpha is None:
        alpha = (float(np.mean(outlier_truth)) if outlier_truth is not None
                 else DEFAULT_REAL_ALPHA)
    s_grid = default_s_grid(X.shape[1]) if s_grid is None else list(s_grid)
    rows = []
    for m in methods:
        a = alpha if m in ("tkc", "rskc") else None
        if m in SPARSE_METHODS:
            if s is not None:
                s_m, model = s, fit_method(m, X, k, s, alpha, seed)
            elif labels is not None:
                s_m, model = oracle_s(m, X, labels, k, s_grid, alpha, seed)
            else:
                s_m = gap_s(m, X, k, s_grid, A, seed, alpha, jobs)
                model = fit_method(m, X, k, s_m, alpha, seed)
        else:
            s_m, model = None, fit_method(m, X, k, None, alpha, seed)
        if labels is not None:
            report = evaluate(model, labels, outlier_truth, informative_indices)
        else:
            report = EvalReport()
        rows.append(CompareRow(m, k, s_m, a, report))
    return rows


def select_and_evaluate(dataset: SimDataset, k_grid, A: int, seed: int,
                        s_grid=None, jobs: int = 1) -> EvalReport:
    """Gap selection of (k, s), a refit at the optimum and its metrics."""
    table = gap_table(dataset.X, k_grid, s_grid, A=A, seed=seed, jobs=jobs)
    k, s = select_k(table)
    model = fit(dataset.X, FitConfig(k=k, s=s, seed=seed))
    return evaluate_dataset(model, dataset, selected_k=k, selected_s=s)


def run_replicate(setting: StudySetting, config: SimConfig, A: int, seed: int,
                  methods=METHODS, jobs: int = 1, s_grid=None):
    """Generate one dataset and evaluate it per the setting's protocol.

    Returns the dataset and a list of (method, report, s, alpha) tuples.
    """
    ds = generate(config)
    if setting.known_k:
        rows = compare(ds.X, setting.k_grid[0], methods, labels=ds.labels,
                       outlier_truth=ds.outlier_flags,
                       informative_indices=ds.informative_indices, s_grid=s_grid,
                       seed=seed, jobs=jobs)
        return ds, [(r.method, r.report, r.s, r.alpha) for r in rows]
    report = select_and_evaluate(ds, setting.k_grid, A, seed, s_grid=s_grid, jobs=jobs)
    return ds, [("wrsk", report, report.selected_s, None)]


def k_histogram(selected: list[int], k_grid) -> dict[int, int]:
    return {k: int(sum(1 for x in selected if x == k)) for k in k_grid}


def summary_stats(values) -> dict:
    """Count, median, quartiles, mean of the defined values."""
    vals = np.asarray([v for v in values if v is not None], dtype=float)
    if not vals.size:
        return {"count": 0, "mean": math.nan, "median": math.nan, "q1": math.nan, "q3": math.nan}
    q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
    return {"count": int(vals.size), "mean": float(vals.mean()), "median": float(med),
            "q1": float(q1), "q3": float(q3)}
