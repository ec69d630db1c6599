"""Weighted robust and sparse k-means with LOF observation weights,
lasso variable weights and permutation gap selection of (k, s)."""

from .baselines import kmeans, robust_sparse_kmeans, sparse_kmeans, trimmed_kmeans
from .core import ClusterModel, FitConfig, fit, update_variable_weights
from .evaluation import EvalReport, cer, evaluate, outlier_rates
from .initialization import RobinParams, robin_init
from .outlyingness import LofParams, biweight, lof, standardize_lof
from .selection import GapTable, gap_table, select_k, select_s
from .simgen import SimConfig, SimDataset, contaminate, generate

__version__ = "0.1.0"

__all__ = [
    "ClusterModel", "EvalReport", "FitConfig", "GapTable", "LofParams", "RobinParams",
    "SimConfig", "SimDataset", "biweight", "cer", "contaminate", "evaluate", "fit",
    "gap_table", "generate", "kmeans", "lof", "outlier_rates", "robin_init",
    "robust_sparse_kmeans", "select_k", "select_s", "sparse_kmeans", "standardize_lof",
    "trimmed_kmeans", "update_variable_weights",
]
