import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import knn_brute, lof_brute, median, two_pass_sd
from wrsk.outlyingness import (
    MAD_SCALE,
    LofParams,
    biweight,
    biweight_threshold,
    cluster_weights,
    knn,
    lof,
    mad,
    member_weights,
    pairwise_distances,
    standardize_lof,
    translated_biweight,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def _table_as_pairs(table):
    return [sorted(zip(d.tolist(), i.tolist())) for d, i in zip(table.distances, table.indices)]


# knn


def test_knn_symmetric_tie_keeps_both():
    t = knn(np.array([[0.0], [1.0], [2.0]]), 1)
    assert sorted(t.indices[1].tolist()) == [0, 2]


def test_knn_nearest_by_inspection():
    t = knn(np.array([[0.0], [1.0], [3.0]]), 1)
    assert t.indices[0].tolist() == [1]
    assert t.indices[2].tolist() == [1]


def test_knn_matches_brute_force_8_points(rng):
    X = rng.normal(size=(8, 2))
    got = _table_as_pairs(knn(X, 3))
    want = knn_brute(X.tolist(), 3)
    for g, w in zip(got, want):
        assert [j for _, j in g] == [j for _, j in w]
        np.testing.assert_allclose([d for d, _ in g], [d for d, _ in w], rtol=1e-12)


@pytest.mark.parametrize("n,q", [(1, 1), (5, 0), (5, 5)])
def test_knn_rejects_bad_arguments(n, q):
    with pytest.raises(ValueError):
        knn(np.zeros((n, 2)) + np.arange(n)[:, None], q)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 50).flatmap(
    lambda n: st.tuples(arrays(float, (n, 2), elements=st.integers(-4, 4).map(float)),
                        st.integers(1, n - 1))))
def test_knn_equals_brute_force_with_ties(data):
    X, q = data
    got = _table_as_pairs(knn(X, q))
    want = knn_brute(X.tolist(), q)
    for i, (g, w) in enumerate(zip(got, want)):
        assert sorted(j for _, j in g) == sorted(j for _, j in w)
        assert i not in [j for _, j in g]


# lof


def test_lof_grid_interior_near_one():
    X = np.array([(a, b) for a in range(5) for b in range(5)], dtype=float)
    scores = lof(X, 4)
    interior = [i for i, (a, b) in enumerate(X) if 0 < a < 4 and 0 < b < 4]
    assert np.all((scores[interior] >= 0.8) & (scores[interior] <= 1.2))


def test_lof_isolated_point_matches_hand_oracle(rng):
    t = np.linspace(0, 2 * np.pi, 10, endpoint=False)
    ring = np.c_[np.cos(t), np.sin(t)] * 0.5 + rng.uniform(-0.05, 0.05, size=(10, 2))
    X = np.vstack([ring, [[20.0, 0.0]]])
    scores = lof(X, 3)
    np.testing.assert_allclose(scores, lof_brute(X.tolist(), 3), rtol=1e-10)
    assert scores[-1] > 2
    assert np.all(scores[:10] < 1.3)


def test_lof_duplicates_capped_to_one():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 6.0]])
    scores = lof(X, 1)
    assert scores[0] == pytest.approx(1.0)
    assert scores[1] == pytest.approx(1.0)
    np.testing.assert_allclose(scores, lof_brute(X.tolist(), 1))


def test_lof_positive_and_matches_oracle_random(rng):
    for _ in range(5):
        X = rng.normal(size=(15, 3))
        s = lof(X, 4)
        assert np.all(s > 0)
        np.testing.assert_allclose(s, lof_brute(X.tolist(), 4), rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50), st.floats(0, 2 * math.pi))
def test_lof_invariant_to_similarity_transforms(seed, scale, angle):
    X = np.random.default_rng(seed).normal(size=(20, 2))
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    Y = scale * X @ R.T + np.array([3.0, -7.0])
    np.testing.assert_allclose(lof(X, 5), lof(Y, 5), rtol=1e-7)


# standardization


def test_standardize_constant_gives_zeros():
    np.testing.assert_array_equal(standardize_lof([1.0, 1.0, 1.0]), [0.0, 0.0, 0.0])


def test_standardize_simple():
    np.testing.assert_allclose(standardize_lof([1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0])


def test_standardize_matches_independent_computation(rng):
    x = rng.uniform(0.5, 3, size=20)
    m = math.fsum(x[::-1]) / 20
    sd = two_pass_sd(list(x))
    np.testing.assert_allclose(standardize_lof(x), (x - m) / sd, rtol=0, atol=1e-12)


def test_standardize_member_subset():
    scores = np.array([10.0, 1.0, 99.0, 3.0])
    np.testing.assert_allclose(standardize_lof(scores, [1, 3]),
                               [-1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_standardize_empty_member_set_errors():
    with pytest.raises(ValueError):
        standardize_lof([1.0, 2.0], [])


@settings(max_examples=80, deadline=None)
@given(arrays(float, st.integers(2, 40), elements=st.floats(0.1, 50)))
def test_standardize_mean_zero_sd_one(x):
    z = standardize_lof(x)
    if np.all(z == 0):
        return
    assert abs(z.mean()) < 1e-10
    assert abs(z.std(ddof=1) - 1) < 1e-10


# biweight


def test_biweight_boundaries_and_midpoint():
    M, c = 0.3, 2.0
    w = translated_biweight([M, c, (M + c) / 2, M - 1, c + 1], M, c)
    np.testing.assert_allclose(w, [1.0, 0.0, 0.5625, 1.0, 0.0])


def test_biweight_hand_example():
    z = np.array([-1.2, -0.3, 0.1, 0.4, 2.5])
    med = median(z.tolist())
    raw_mad = median([abs(v - med) for v in z])
    M = med + 1.4826 * raw_mad
    res = biweight(z, c=2.0)
    assert res.M == pytest.approx(M)
    assert res.weights[-1] == 0.0
    assert np.all(res.weights[z <= M] == 1.0)
    assert not res.step_fallback


def test_biweight_step_fallback_when_c_below_M():
    z = np.array([0.0, 3.0, 6.0])
    res = biweight(z, c=2.0)
    assert res.step_fallback
    np.testing.assert_array_equal(res.weights, np.where(z <= res.M, 1.0, 0.0))


def test_mad_scaled_and_unscaled():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert mad(x, scaled=False) == pytest.approx(1.5)
    assert mad(x) == pytest.approx(MAD_SCALE * 1.5)
    assert biweight_threshold(x, scaled_mad=False) == pytest.approx(3.0 + 1.5)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 40), elements=finite), st.floats(0.1, 5))
def test_biweight_in_unit_interval_and_monotone(z, c):
    w = biweight(z, c=c).weights
    assert np.all((w >= 0) & (w <= 1))
    order = np.argsort(z, kind="stable")
    assert np.all(np.diff(w[order]) <= 1e-15)


# member and cluster weights


def test_member_weights_singleton_and_small_sets():
    w, _ = member_weights(np.zeros((1, 1)), LofParams())
    assert w.tolist() == [1.0]
    D = pairwise_distances(np.array([[0.0], [1.0], [2.5]]))
    w, _ = member_weights(D, LofParams(q=10))
    assert w.shape == (3,) and np.all((w >= 0) & (w <= 1))


def test_cluster_weights_identical_rows_get_one():
    X = np.vstack([np.ones((6, 2)), np.zeros((5, 2))])
    v, _ = cluster_weights(pairwise_distances(X), np.repeat([0, 1], [6, 5]), LofParams())
    np.testing.assert_array_equal(v, 1.0)


def test_cluster_weights_downweight_far_point(rng):
    X = np.vstack([rng.normal(size=(30, 2)), [[15.0, 15.0]]])
    v, _ = cluster_weights(pairwise_distances(X), np.zeros(31, dtype=int), LofParams())
    assert v[-1] < 0.5
    assert np.mean(v[:30] > 0.5) > 0.9


def test_cluster_weights_cache_reuse(rng):
    X = rng.normal(size=(20, 3))
    D = pairwise_distances(X)
    a = np.repeat([0, 1], 10)
    cache = {}
    v1, _ = cluster_weights(D, a, LofParams(), cache)
    v2, _ = cluster_weights(D, a, LofParams(), cache)
    np.testing.assert_array_equal(v1, v2)
    assert len(cache) == 2


@pytest.mark.parametrize("kw", [{"q": 0}, {"c": 0.0}, {"epsilon_density": 0.0}])
def test_lof_params_validation(kw):
    with pytest.raises(ValueError):
        LofParams(**kw)
