import numpy as np
import pytest

from ssvq.clustering import clustering_mse
from ssvq.core import partition
from ssvq.errors import EmptyModel, ShapeMismatch
from ssvq.vq import (
    VQModel,
    accumulate_codeword_grads,
    gradient_dominance_report,
    vq_decode,
    vq_encode,
)

from .oracles import loop_mse


def test_lossless_at_k_equals_n():
    W = np.random.default_rng(0).normal(size=(4, 8))
    m = vq_encode(W, K=8, d=4)
    assert np.array_equal(vq_decode(m), W)


def test_constant_matrix_single_codeword():
    m = vq_encode(np.full((4, 4), 0.3), K=1, d=2)
    assert np.array_equal(m.codebook, [[0.3, 0.3]])


def test_mse_matches_loop():
    W = np.random.default_rng(1).normal(size=(64, 64))
    m = vq_encode(W, 64, 4, seed=3)
    mse = np.mean((vq_decode(m) - W) ** 2)
    assert mse == pytest.approx(loop_mse(partition(W, 4), m.codebook, m.assignments), abs=1e-12)
    assert mse == pytest.approx(clustering_mse(partition(W, 4), m.codebook, m.assignments), abs=1e-15)


def test_codeword_grad_is_member_sum():
    g = np.arange(8.0).reshape(2, 4)
    m = VQModel(np.zeros((3, 2)), np.array([0, 2, 0, 0]), (2, 4))
    out = accumulate_codeword_grads(g, m)
    assert np.array_equal(out, [[0 + 4 + 6, 1 + 5 + 7], [0, 0], [2, 3]])
    assert np.allclose(accumulate_codeword_grads(g, m, "mean")[0], [10 / 3, 13 / 3])


def test_codeword_grad_finite_difference():
    """Loss through decode: d/dc of sum(G * W_q) is the member sum of G."""
    rng = np.random.default_rng(2)
    m = VQModel(rng.normal(size=(5, 3)), rng.integers(5, size=8), (4, 6))
    G = rng.normal(size=(4, 6))
    h = 1e-5
    fd = np.zeros_like(m.codebook)
    for idx in np.ndindex(fd.shape):
        cb = m.codebook.copy()
        cb[idx] += h
        up = np.sum(G * vq_decode(VQModel(cb, m.assignments, m.shape)))
        cb[idx] -= 2 * h
        down = np.sum(G * vq_decode(VQModel(cb, m.assignments, m.shape)))
        fd[idx] = (up - down) / (2 * h)
    assert np.allclose(accumulate_codeword_grads(G, m), fd, atol=1e-8)


def test_grad_shape_checked():
    m = VQModel(np.zeros((1, 2)), np.zeros(2, dtype=int), (2, 2))
    with pytest.raises(ShapeMismatch):
        accumulate_codeword_grads(np.zeros((4, 1)), m)


def _heavy_tail_model(rng, K=8, members=40, d=4, big=50.0):
    grads = rng.normal(size=(K * members, d))
    grads[::members] *= big  # one dominant member per codeword
    a = np.repeat(np.arange(K), members)
    return grads.reshape(-1, 8), VQModel(np.zeros((K, d)), a, (K * members * d // 8, 8))


def test_dominance_heavy_tail():
    g, m = _heavy_tail_model(np.random.default_rng(3))
    rep = gradient_dominance_report(g, m, (0.05, 0.10), (0.60, 0.50))
    assert rep.top[0.10] > 0.9 and rep.top[0.05] > 0.9
    assert rep.bottom[0.50] < 0.5 and rep.bottom[0.60] < 0.5
    assert len(rep.rows()) == 4


def test_dominance_all_equal_gradients():
    g = np.tile([1.0, 2.0], (4, 2))  # every subvector gradient identical
    m = VQModel(np.zeros((1, 2)), np.zeros(8, dtype=int), (4, 4))
    rep = gradient_dominance_report(g, m, (0.5,), (0.5,))
    assert rep.top[0.5] == pytest.approx(1.0)
    assert rep.bottom[0.5] == pytest.approx(1.0)


def test_dominance_single_member_clusters():
    g = np.random.default_rng(4).normal(size=(2, 4))
    m = VQModel(np.zeros((4, 2)), np.arange(4), (2, 4))
    rep = gradient_dominance_report(g, m, (1.0,), (1.0,))
    assert rep.top[1.0] == pytest.approx(1.0)


def test_dominance_errors():
    m = VQModel(np.zeros((1, 2)), np.zeros(2, dtype=int), (2, 2))
    with pytest.raises(ValueError):
        gradient_dominance_report(np.zeros((2, 2)), m, (0.0,), (0.5,))
    with pytest.raises(EmptyModel):
        gradient_dominance_report(np.zeros((0, 0)), VQModel(np.zeros((0, 2)), np.zeros(0, dtype=int), (0, 0)))
