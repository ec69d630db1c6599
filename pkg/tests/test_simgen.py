import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wrsk.simgen import (
    SimConfig,
    SimDataset,
    contaminate,
    equicorrelation,
    generate,
    group_covariance,
    group_means,
    random_rotation,
    sample_gaussian,
)


def _sim1(seed=0, **kw):
    base = dict(g=3, group_sizes=[40] * 3, p_inf=50, p_noise=750, outlier_frac_inf=0.1,
                outlier_frac_noise=0.1, noise_contam_var_frac=0.1, seed=seed)
    base.update(kw)
    return SimConfig(**base)


# means


def test_means_pattern_g4_p11(rng):
    mu = group_means(4, 11, rng)
    nz = mu != 0
    assert nz[0].astype(int).tolist() == [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0]
    assert nz[1].astype(int).tolist() == [0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0]
    mags = np.abs(mu[nz])
    assert np.all((mags >= 3) & (mags <= 6))


def test_means_single_group_fills_every_coordinate(rng):
    assert np.all(group_means(1, 7, rng) != 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 30), st.integers(0, 10_000))
def test_mean_supports_partition_coordinates(g, p, seed):
    nz = group_means(g, p, np.random.default_rng(seed)) != 0
    assert np.all(nz.sum(axis=0) == 1)
    for t in range(g):
        assert np.flatnonzero(nz[t]).tolist() == list(range(t, p, g))


def test_mean_signs_are_mixed():
    mu = group_means(2, 400, np.random.default_rng(0))
    frac_pos = (mu[mu != 0] > 0).mean()
    assert 0.4 < frac_pos < 0.6


# covariance


@pytest.mark.parametrize("p,rho", [(2, 0.1), (5, 0.5), (12, 0.9)])
def test_covariance_spectrum_trace_and_rotation(p, rho, rng):
    S, Q = group_covariance(p, rho, rng, return_rotation=True)
    want = sorted([1 + (p - 1) * rho] + [1 - rho] * (p - 1))
    np.testing.assert_allclose(np.linalg.eigvalsh(S), want, atol=1e-8)
    assert np.trace(S) == pytest.approx(p, abs=1e-10)
    np.testing.assert_allclose(Q.T @ Q, np.eye(p), atol=1e-10)
    np.testing.assert_array_equal(S, S.T)


def test_rotation_sign_fix_makes_r_diagonal_positive(rng):
    Q = random_rotation(6, rng)
    _, R = np.linalg.qr(Q)
    assert np.allclose(np.abs(np.diag(R)), 1)


def test_equicorrelation():
    E = equicorrelation(3, 0.4)
    assert E.tolist() == [[1, 0.4, 0.4], [0.4, 1, 0.4], [0.4, 0.4, 1]]


def test_sample_covariance_matches(rng):
    S = group_covariance(6, 0.7, rng)
    mean = np.arange(6.0)
    Z = sample_gaussian(mean, S, 10_000, np.random.default_rng(1))
    assert np.max(np.abs(np.cov(Z, rowvar=False) - S)) < 0.1
    assert np.max(np.abs(Z.mean(axis=0) - mean)) < 0.1


# generation


def test_clean_generation_means_and_flags():
    cfg = SimConfig(g=3, group_sizes=[200, 150, 100], p_inf=9, p_noise=4, seed=3)
    ds = generate(cfg)
    assert not ds.outlier_flags.any()
    start = 0
    for t, n_t in enumerate(ds.group_sizes):
        block = ds.X[start:start + n_t, :9]
        # every coordinate variance is 1 in the rotated equicorrelation model
        assert np.all(np.abs(block.mean(axis=0) - ds.means[t]) <= 4 / math.sqrt(n_t))
        start += n_t
    assert np.all(np.abs(ds.X[:, 9:].mean(axis=0)) <= 4 / math.sqrt(450))


def test_simulation1_shape_and_flag_counts():
    ds = generate(_sim1())
    assert ds.X.shape == (120, 800)
    assert ds.informative_indices.tolist() == list(range(50))
    assert ds.outlier_inf_flags.sum() == 12
    assert ds.outlier_noise_flags.sum() == 12
    for t in range(3):
        rows = slice(40 * t, 40 * t + 40)
        # the first four rows of each group carry the informative outliers
        assert ds.outlier_inf_flags[rows].tolist()[:4] == [True] * 4
        assert ds.outlier_inf_flags[rows].sum() == 4
    clean = generate(_sim1(outlier_frac_inf=0, outlier_frac_noise=0))
    changed_cols = np.flatnonzero((ds.X != clean.X).any(axis=0))
    noise_changed = changed_cols[changed_cols >= 50]
    assert noise_changed.size == 75
    assert np.all(np.abs(ds.X[np.ix_(ds.outlier_noise_flags, noise_changed)]) >= 6)


def test_labels_are_pre_contamination():
    ds = generate(_sim1())
    assert ds.labels.tolist() == [0] * 40 + [1] * 40 + [2] * 40


def test_ladder_40_10_counts():
    clean = generate(SimConfig(g=3, size_range=(50, 150), p_inf=20, p_noise=80, seed=4))
    cfg = SimConfig(**{**clean.config.to_dict(), "outlier_frac_inf": 0.4,
                       "outlier_frac_noise": 0.1})
    ds = contaminate(clean, cfg)
    start = 0
    for n_t in clean.group_sizes:
        rows = slice(start, start + n_t)
        assert ds.outlier_inf_flags[rows].sum() == math.ceil(0.4 * n_t)
        assert ds.outlier_noise_flags[rows].sum() == math.ceil(0.1 * n_t)
        start += n_t


def test_contaminate_zero_is_identity():
    clean = generate(SimConfig(g=2, group_sizes=[10, 10], p_inf=4, p_noise=6, seed=1))
    out = contaminate(clean, clean.config)
    np.testing.assert_array_equal(out.X, clean.X)
    assert not out.outlier_flags.any()


def test_contaminate_with_external_rng_is_reproducible():
    clean = generate(SimConfig(g=2, group_sizes=[10, 10], p_inf=4, p_noise=6, seed=1))
    cfg = SimConfig(**{**clean.config.to_dict(), "outlier_frac_inf": 0.2})
    a = contaminate(clean, cfg, np.random.default_rng(5))
    b = contaminate(clean, cfg, np.random.default_rng(5))
    np.testing.assert_array_equal(a.X, b.X)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 0.5), st.floats(0, 0.4),
       st.sampled_from(["scattered", "uniform"]))
def test_flags_disjoint_and_counts_exact(seed, f_inf, f_noise, kind):
    cfg = SimConfig(g=2, group_sizes=[12, 9], p_inf=4, p_noise=10, outlier_frac_inf=f_inf,
                    outlier_frac_noise=f_noise, outlier_kind_inf=kind, seed=seed)
    ds = generate(cfg)
    assert not (ds.outlier_inf_flags & ds.outlier_noise_flags).any()
    for start, n_t in ((0, 12), (12, 9)):
        rows = slice(start, start + n_t)
        assert ds.outlier_inf_flags[rows].sum() == math.ceil(f_inf * n_t - 1e-9)
        assert ds.outlier_noise_flags[rows].sum() == math.ceil(f_noise * n_t - 1e-9)


def test_overlap_impossible_errors():
    with pytest.raises(ValueError, match="exceed"):
        generate(SimConfig(g=1, group_sizes=[5], p_inf=2, p_noise=5,
                           outlier_frac_inf=0.6, outlier_frac_noise=0.5))


@pytest.mark.parametrize("kw", [{"g": 0}, {"g": 2, "p_inf": 0}, {"outlier_frac_inf": 1.0},
                                {"outlier_kind_inf": "cauchy"}, {"group_sizes": [5]}])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        generate(SimConfig(**{"g": 3, "p_inf": 6, "p_noise": 2, **kw}))


def test_uniform_outliers_symmetric_and_literal():
    cfg = dict(g=1, group_sizes=[200], p_inf=5, p_noise=0, outlier_frac_inf=0.5,
               outlier_kind_inf="uniform", seed=2)
    ds = generate(SimConfig(**cfg))
    vals = ds.X[ds.outlier_inf_flags]
    assert np.all((np.abs(vals) >= 6) & (np.abs(vals) <= 12))
    assert (vals < 0).any() and (vals > 0).any()
    lit = generate(SimConfig(**cfg, uniform_literal=True)).X[ds.outlier_inf_flags]
    assert np.all(np.abs(lit) <= 12) and (np.abs(lit) < 6).any()


def test_deterministic_per_seed():
    a, b = generate(_sim1(seed=9)), generate(_sim1(seed=9))
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, generate(_sim1(seed=10)).X)


def test_save_load_round_trip(tmp_path):
    ds = generate(SimConfig(g=2, size_range=(8, 12), p_inf=3, p_noise=4,
                            outlier_frac_inf=0.2, outlier_frac_noise=0.2, seed=6))
    ds.save(tmp_path / "d")
    assert sorted(p.name for p in (tmp_path / "d").iterdir()) == [
        "X.csv", "flags.csv", "labels.csv", "meta.json"]
    back = SimDataset.load(tmp_path / "d")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.outlier_inf_flags, ds.outlier_inf_flags)
    np.testing.assert_array_equal(back.outlier_noise_flags, ds.outlier_noise_flags)
    np.testing.assert_array_equal(back.informative_indices, ds.informative_indices)
    assert back.config == ds.config
    assert back.group_sizes == ds.group_sizes
