import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvq.clustering import (
    assign,
    clustering_mse,
    kmeans,
    kmeans_pp_init,
    lloyd,
    weighted_kmeans,
)
from ssvq.errors import AllZeroWeights, ShapeMismatch, TooManyClusters

from .oracles import best_partition, loop_mse


def test_exact_cover():
    pts = np.random.default_rng(0).normal(size=(12, 3))
    cb, a = kmeans(pts, 12, seed=1)
    assert clustering_mse(pts, cb, a) == 0.0
    assert sorted(a) == list(range(12))


def test_single_cluster_is_mean():
    pts = np.random.default_rng(1).normal(size=(30, 4))
    cb, a = kmeans(pts, 1)
    assert np.allclose(cb[0], pts.mean(axis=0))
    assert not a.any()


def test_two_blobs_match_enumeration():
    pts = np.array([0, 0.1, 0.2, 10, 10.1, 10.2])[:, None]
    obj, _, centers = best_partition(pts, 2)
    cb, a = kmeans(pts, 2, seed=0)
    assert sorted(cb[:, 0]) == pytest.approx([0.1, 10.1])
    assert sorted(centers[:, 0]) == pytest.approx([0.1, 10.1])
    assert clustering_mse(pts, cb, a) == pytest.approx(obj / 6)
    # exhaustive optimum frozen from the enumeration above
    assert obj == pytest.approx(0.04)


def test_too_many_clusters():
    with pytest.raises(TooManyClusters):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(TooManyClusters):
        kmeans_pp_init(np.zeros((3, 2)), 4)


def test_identical_points_keep_k_codewords():
    pts = np.ones((10, 2))
    cb, a = kmeans(pts, 3)
    assert cb.shape == (3, 2)
    assert clustering_mse(pts, cb, a) == 0.0
    assert a.max() < 3


def test_pp_init_exact_cover_and_determinism():
    pts = np.random.default_rng(2).normal(size=(9, 2))
    init = kmeans_pp_init(pts, 9, seed=5)
    assert {tuple(r) for r in init} == {tuple(r) for r in pts}
    assert np.array_equal(init, kmeans_pp_init(pts, 9, seed=5))
    one = kmeans_pp_init(pts, 1, seed=5)
    assert any(np.array_equal(one[0], p) for p in pts)


def test_assign_ties_go_to_lowest_index():
    a, _ = assign(np.array([[0.0], [1.0]]), np.array([[0.5], [0.5], [1.0]]))
    assert list(a) == [0, 2]


def test_lloyd_history_non_increasing():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(500, 4))
    _, _, hist = lloyd(pts, pts[:20].copy(), max_iters=50, rel_tol=0)
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_weighted_mean_two_points():
    cb, _ = weighted_kmeans(np.array([[1.0], [3.0]]), np.array([3.0, 1.0]), 1)
    assert cb[0, 0] == pytest.approx(1.5)


def test_weighted_uniform_is_bit_identical():
    pts = np.random.default_rng(4).normal(size=(200, 4))
    cb1, a1 = kmeans(pts, 8, seed=7)
    cb2, a2 = weighted_kmeans(pts, np.full(200, 2.5), 8, seed=7)
    assert np.array_equal(cb1, cb2) and np.array_equal(a1, a2)


def test_weighted_four_points_match_enumeration():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(4, 2))
    w = rng.uniform(0.1, 3.0, size=4)
    obj, _, _ = best_partition(pts, 2, w)
    found = []
    for seed in range(16):
        cb, a = weighted_kmeans(pts, w, 2, seed=seed)
        found.append(sum(w[i] * np.sum((pts[i] - cb[a[i]]) ** 2) for i in range(4)))
    assert min(found) == pytest.approx(obj, abs=1e-12)


def test_weighted_rejects_zero_weights():
    with pytest.raises(AllZeroWeights):
        weighted_kmeans(np.zeros((3, 1)), np.zeros(3), 1)
    with pytest.raises(ShapeMismatch):
        weighted_kmeans(np.zeros((3, 1)), np.ones(2), 1)


def test_mse_small_cases():
    assert clustering_mse(np.array([[2.0]]), np.array([[1.0]]), np.array([0])) == 1.0
    with pytest.raises(ShapeMismatch):
        clustering_mse(np.zeros((2, 2)), np.zeros((1, 3)), np.array([0, 0]))


def test_mse_matches_loop_oracle():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(100, 4))
    cb, a = kmeans(pts, 10, seed=0)
    assert clustering_mse(pts, cb, a) == pytest.approx(loop_mse(pts, cb, a), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 8), st.integers(1, 3), st.integers(0, 10_000))
def test_best_of_16_seeds_reaches_global_optimum(n, k, seed):
    k = min(k, n)
    pts = np.random.default_rng(seed).normal(size=(n, 1))
    obj, _, _ = best_partition(pts, k)
    best = min(clustering_mse(pts, *kmeans(pts, k, seed=s)) * n for s in range(16))
    assert best == pytest.approx(obj, rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(1, 4), st.integers(1, 8), st.integers(0, 10_000))
def test_assignments_are_nearest(n, d, k, seed):
    k = min(k, n)
    pts = np.random.default_rng(seed).normal(size=(n, d))
    cb, a = kmeans(pts, k, seed=seed)
    dist = ((pts[:, None, :] - cb[None]) ** 2).sum(-1)
    assert np.all(dist[np.arange(n), a] <= dist.min(axis=1) + 1e-12)
    assert a.min() >= 0 and a.max() < k
