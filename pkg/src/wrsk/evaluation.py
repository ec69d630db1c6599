"""Clustering, outlier and variable-selection metrics.

Rates that cannot be defined (no actual outliers, no nonzero weights, ...)
are reported as ``None``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass
class EvalReport:
    cer: float | None = None
    tpr: float | None = None
    fpr: float | None = None
    v_bar_out: float | None = None
    v_bar_nonout: float | None = None
    w_bar_inf: float | None = None
    w_bar_non0: float | None = None
    w_bar_noise: float | None = None
    selected_k: int | None = None
    selected_s: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(EvalReport)]

    def csv_row(self) -> list[str]:
        return ["" if x is None else repr(float(x)) if isinstance(x, float) else str(x)
                for x in asdict(self).values()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        writer.writerow(self.csv_row())
        return buf.getvalue()


def _pairs(counts: np.ndarray) -> int:
    counts = counts.astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


def cer(P, Q) -> float:
    """Classification error rate: share of observation pairs on which the
    two partitions disagree about co-membership."""
    P = np.asarray(P)
    Q = np.asarray(Q)
    if P.shape != Q.shape or P.ndim != 1:
        raise ValueError("partitions must be 1-D and of equal length")
    n = P.size
    if n < 2:
        raise ValueError("need at least 2 observations")
    _, p_idx = np.unique(P, return_inverse=True)
    _, q_idx = np.unique(Q, return_inverse=True)
    table = np.zeros((p_idx.max() + 1, q_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (p_idx, q_idx), 1)
    together_p = _pairs(table.sum(axis=1))
    together_q = _pairs(table.sum(axis=0))
    together_both = _pairs(table.ravel())
    disagree = together_p + together_q - 2 * together_both
    return disagree / (n * (n - 1) // 2)


def outlier_rates(flags, truth) -> tuple[float | None, float | None]:
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if flags.shape != truth.shape:
        raise ValueError("flags and truth must have equal length")
    pos = truth.sum()
    neg = truth.size - pos
    tpr = float((flags & truth).sum() / pos) if pos else None
    fpr = float((flags & ~truth).sum() / neg) if neg else None
    return tpr, fpr


def _mean_or_none(x) -> float | None:
    x = np.asarray(x, dtype=float)
    return float(x.mean()) if x.size else None


def weight_summaries(model, outlier_truth, informative_indices) -> EvalReport:
    """Mean observation weights by true class and mean variable weights.

    ``model`` needs ``v`` and ``w`` arrays. ``w_bar_non0`` averages the
    strictly positive variable weights.
    """
    v = np.asarray(model.v, dtype=float)
    w = np.asarray(model.w, dtype=float)
    truth = np.asarray(outlier_truth, dtype=bool)
    if truth.shape != v.shape:
        raise ValueError("outlier truth does not match the number of observations")
    inf = np.zeros(w.size, dtype=bool)
    idx = np.asarray(informative_indices, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= w.size):
        raise ValueError("informative index out of range")
    inf[idx] = True
    return EvalReport(
        v_bar_out=_mean_or_none(v[truth]),
        v_bar_nonout=_mean_or_none(v[~truth]),
        w_bar_inf=_mean_or_none(w[inf]),
        w_bar_non0=_mean_or_none(w[w > 0]),
        w_bar_noise=_mean_or_none(w[~inf]),
    )


def evaluate(model, labels, outlier_truth=None, informative_indices=None,
             selected_k=None, selected_s=None) -> EvalReport:
    """Full report for one fitted model against ground truth."""
    n = len(labels)
    truth = np.zeros(n, dtype=bool) if outlier_truth is None else np.asarray(outlier_truth, bool)
    inf = np.arange(len(model.w)) if informative_indices is None else informative_indices
    report = weight_summaries(model, truth, inf)
    report.cer = cer(labels, model.assignment)
    report.tpr, report.fpr = outlier_rates(model.outliers, truth)
    report.selected_k = selected_k
    report.selected_s = selected_s
    return report


def evaluate_dataset(model, dataset, **kw) -> EvalReport:
    return evaluate(model, dataset.labels, dataset.outlier_flags,
                    dataset.informative_indices, **kw)
