"""Synthetic benchmark data: sparse Gaussian groups, noise variables, outliers.

Rows are stacked group by group. Informative variables come first, noise
variables after them. Each random quantity is drawn from its own stream
keyed by (seed, stage, group) so that changing one stage never shifts
another.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

# stream stages
_MEANS, _COV, _SIZES, _SAMPLE, _NOISE, _CONTAM_INF, _CONTAM_NOISE = range(7)


def stream(seed: int, stage: int, group: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stage, group]))


def _count(frac: float, n: int) -> int:
    # ceil with slack for products like 0.3 * 40 = 12.000000000000002
    return int(math.ceil(frac * n - 1e-9)) if frac > 0 else 0


@dataclass
class SimConfig:
    g: int = 3
    group_sizes: list[int] | None = None
    size_range: tuple[int, int] | None = None
    p_inf: int = 50
    p_noise: int = 750
    mu_range: tuple[float, float] = (3.0, 6.0)
    rho_range: tuple[float, float] = (0.1, 0.9)
    sigma_range: tuple[float, float] = (3.0, 10.0)
    outlier_frac_inf: float = 0.0
    outlier_frac_noise: float = 0.0
    noise_contam_var_frac: float = 0.1
    inf_contam_var_frac: float = 1.0
    outlier_kind_inf: str = "scattered"
    uniform_range: tuple[float, float] = (6.0, 12.0)
    uniform_literal: bool = False
    seed: int = 0

    def validate(self):
        if self.g < 1:
            raise ValueError("g must be >= 1")
        if self.g > 1 and self.p_inf < 1:
            raise ValueError("p_inf must be >= 1 when g > 1")
        if self.p_inf < 0 or self.p_noise < 0 or self.p_inf + self.p_noise < 1:
            raise ValueError("dimensions must be nonnegative with p >= 1")
        for name in ("outlier_frac_inf", "outlier_frac_noise"):
            f = getattr(self, name)
            if not 0 <= f < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {f}")
        for name in ("noise_contam_var_frac", "inf_contam_var_frac"):
            f = getattr(self, name)
            if not 0 <= f <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {f}")
        if self.outlier_kind_inf not in ("scattered", "uniform"):
            raise ValueError(f"unknown outlier kind {self.outlier_kind_inf!r}")
        if self.group_sizes is not None and len(self.group_sizes) != self.g:
            raise ValueError("group_sizes must have g entries")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        for key in ("size_range", "mu_range", "rho_range", "sigma_range", "uniform_range"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SimDataset:
    X: np.ndarray
    labels: np.ndarray
    outlier_inf_flags: np.ndarray
    outlier_noise_flags: np.ndarray
    informative_indices: np.ndarray
    means: np.ndarray
    config: SimConfig
    group_sizes: list[int] = field(default_factory=list)

    @property
    def outlier_flags(self) -> np.ndarray:
        return self.outlier_inf_flags | self.outlier_noise_flags

    def save(self, directory) -> Path:
        """Write X.csv, labels.csv, flags.csv and meta.json into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / "X.csv", self.X, delimiter=",", fmt="%.17g")
        with open(d / "labels.csv", "w", newline="") as fh:
            fh.write("label\n")
            fh.writelines(f"{int(x) + 1}\n" for x in self.labels)
        with open(d / "flags.csv", "w", newline="") as fh:
            fh.write("outlier_inf,outlier_noise\n")
            for a, b in zip(self.outlier_inf_flags, self.outlier_noise_flags):
                fh.write(f"{int(a)},{int(b)}\n")
        meta = {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "group_sizes": [int(x) for x in self.group_sizes],
            "n": int(self.X.shape[0]),
            "p": int(self.X.shape[1]),
            "informative_indices": [int(i) + 1 for i in self.informative_indices],
            "means": self.means.tolist(),
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=2))
        return d

    @classmethod
    def load(cls, directory) -> "SimDataset":
        d = Path(directory)
        X = np.loadtxt(d / "X.csv", delimiter=",", ndmin=2)
        labels = np.loadtxt(d / "labels.csv", delimiter=",", skiprows=1, dtype=int, ndmin=1) - 1
        flags = np.loadtxt(d / "flags.csv", delimiter=",", skiprows=1, dtype=int, ndmin=2)
        meta = json.loads((d / "meta.json").read_text())
        return cls(
            X=X, labels=labels,
            outlier_inf_flags=flags[:, 0].astype(bool),
            outlier_noise_flags=flags[:, 1].astype(bool),
            informative_indices=np.asarray(meta["informative_indices"], dtype=int) - 1,
            means=np.asarray(meta["means"], dtype=float),
            config=SimConfig.from_dict(meta["config"]),
            group_sizes=meta["group_sizes"],
        )


def _signed_uniform(rng, size, lo: float, hi: float) -> np.ndarray:
    mag = rng.uniform(lo, hi, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return mag * sign


def group_means(g: int, p_inf: int, rng: np.random.Generator,
                mu_range: tuple[float, float] = (3.0, 6.0)) -> np.ndarray:
    """g x p_inf matrix; row t is nonzero at positions t, t+g, t+2g, ... (0-based).

    Every nonzero entry is an independent draw with magnitude in
    ``mu_range`` and a random sign.
    """
    means = np.zeros((g, p_inf))
    for t in range(g):
        pos = np.arange(t, p_inf, g)
        means[t, pos] = _signed_uniform(rng, pos.size, *mu_range)
    return means


def random_rotation(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed)."""
    Z = rng.standard_normal((p, p))
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def equicorrelation(p: int, rho: float) -> np.ndarray:
    E = np.full((p, p), rho)
    np.fill_diagonal(E, 1.0)
    return E


def group_covariance(p_inf: int, rho: float, rng: np.random.Generator,
                     return_rotation: bool = False):
    """Randomly rotated equicorrelation matrix Q E(rho) Q^T."""
    Q = random_rotation(p_inf, rng)
    S = Q @ equicorrelation(p_inf, rho) @ Q.T
    S = 0.5 * (S + S.T)
    return (S, Q) if return_rotation else S


def symmetric_sqrt(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(S)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sample_gaussian(mean: np.ndarray, cov: np.ndarray, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, mean.size))
    return mean + Z @ symmetric_sqrt(cov)


def _group_sizes(config: SimConfig) -> list[int]:
    if config.group_sizes is not None:
        return [int(x) for x in config.group_sizes]
    if config.size_range is not None:
        lo, hi = config.size_range
        return [int(x) for x in stream(config.seed, _SIZES).integers(lo, hi + 1, size=config.g)]
    return [40] * config.g


def generate(config: SimConfig) -> SimDataset:
    """Draw a dataset and apply the configured contamination."""
    config.validate()
    sizes = _group_sizes(config)
    n = sum(sizes)
    g, p_inf, p_noise = config.g, config.p_inf, config.p_noise
    means = group_means(g, p_inf, stream(config.seed, _MEANS), config.mu_range)
    blocks = []
    for t in range(g):
        rng_cov = stream(config.seed, _COV, t)
        rho = rng_cov.uniform(*config.rho_range)
        cov = group_covariance(p_inf, rho, rng_cov) if p_inf else np.zeros((0, 0))
        blocks.append(sample_gaussian(means[t], cov, sizes[t], stream(config.seed, _SAMPLE, t)))
    X_inf = np.vstack(blocks) if p_inf else np.zeros((n, 0))
    X_noise = stream(config.seed, _NOISE).standard_normal((n, p_noise))
    clean = SimDataset(
        X=np.hstack([X_inf, X_noise]),
        labels=np.repeat(np.arange(g), sizes),
        outlier_inf_flags=np.zeros(n, dtype=bool),
        outlier_noise_flags=np.zeros(n, dtype=bool),
        informative_indices=np.arange(p_inf),
        means=means,
        config=config,
        group_sizes=sizes,
    )
    return contaminate(clean, config)


def _uniform_outliers(rng, size, config: SimConfig) -> np.ndarray:
    lo, hi = config.uniform_range
    if config.uniform_literal:
        # U[-12, 6] u U[6, 12] covers [-12, 12]
        return rng.uniform(-hi, hi, size=size)
    return _signed_uniform(rng, size, lo, hi)


def contaminate(dataset: SimDataset, config: SimConfig | None = None,
                rng: np.random.Generator | None = None) -> SimDataset:
    """Replace rows by outliers at the fractions given in ``config``.

    The first rows of each group are contaminated in the informative
    variables; a random, disjoint set of rows per group is contaminated in a
    random subset of the noise variables. Labels are left untouched.
    """
    config = config or dataset.config
    config.validate()
    base_seed = config.seed if rng is None else int(rng.integers(0, 2**63 - 1))

    def get(stage, t):
        return stream(base_seed, stage, t)

    X = dataset.X.copy()
    sizes = list(dataset.group_sizes)
    p_inf = len(dataset.informative_indices)
    p_noise = X.shape[1] - p_inf
    flags_inf = np.zeros(X.shape[0], dtype=bool)
    flags_noise = np.zeros(X.shape[0], dtype=bool)

    n_inf_vars = _count(config.inf_contam_var_frac, p_inf)
    inf_vars = dataset.informative_indices[:n_inf_vars]
    n_noise_vars = _count(config.noise_contam_var_frac, p_noise)
    noise_vars = p_inf + np.sort(get(_CONTAM_NOISE, 0).choice(p_noise, n_noise_vars, replace=False))

    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    for t, (start, n_t) in enumerate(zip(starts, sizes)):
        m_inf = _count(config.outlier_frac_inf, n_t)
        m_noise = _count(config.outlier_frac_noise, n_t) if n_noise_vars else 0
        if m_inf + m_noise > n_t:
            raise ValueError(
                f"group {t + 1}: {m_inf} informative plus {m_noise} noise outliers "
                f"exceed its {n_t} rows")
        rows = np.arange(start, start + m_inf)
        if m_inf and inf_vars.size:
            rng = get(_CONTAM_INF, t)
            if config.outlier_kind_inf == "scattered":
                sigma = rng.uniform(*config.sigma_range)
                X[np.ix_(rows, inf_vars)] = (dataset.means[t, inf_vars]
                                             + math.sqrt(sigma) * rng.standard_normal((m_inf, inf_vars.size)))
            else:
                X[np.ix_(rows, inf_vars)] = _uniform_outliers(rng, (m_inf, inf_vars.size), config)
            flags_inf[rows] = True
        if m_noise:
            rng = get(_CONTAM_NOISE, t + 1)
            pool = np.arange(start + m_inf, start + n_t)
            picked = np.sort(rng.choice(pool, m_noise, replace=False))
            X[np.ix_(picked, noise_vars)] = _uniform_outliers(rng, (m_noise, noise_vars.size), config)
            flags_noise[picked] = True
    return replace(dataset, X=X, outlier_inf_flags=flags_inf,
                   outlier_noise_flags=flags_noise, config=config)
