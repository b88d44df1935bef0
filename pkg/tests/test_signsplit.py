import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvq.errors import NegativeEntry
from ssvq.signsplit import (
    SSVQModel,
    project_codebook,
    sign,
    ssvq_codebook_grads,
    ssvq_decode,
    ssvq_encode,
    ste_sign_grad,
)
from ssvq.vq import vq_decode

from .oracles import central_diff, rel_err


def test_sign_of_zero_is_positive():
    assert list(sign([-2.0, 0.0, -0.0, 3.0])) == [-1, 1, 1, 1]


def test_encode_clusters_magnitudes():
    W = np.array([[1.0, -2.0], [-1.0, 2.0]])
    m = ssvq_encode(W, K=1, d=2)
    assert np.array_equal(m.codebook, [[1.0, 2.0]])
    assert np.array_equal(ssvq_decode(m), W)
    assert np.array_equal(m.latent, W)
    assert np.array_equal(ssvq_encode(W, 1, 2, alpha=3.0).latent, 3 * W)


def test_lossless_at_k_equals_n():
    W = np.random.default_rng(0).normal(size=(4, 8))
    assert np.array_equal(ssvq_decode(ssvq_encode(W, 8, 4)), W)


def test_decode_is_magnitude_times_sign():
    m = ssvq_encode(np.random.default_rng(1).normal(size=(16, 16)), 8, 4)
    assert np.array_equal(ssvq_decode(m), vq_decode(m.magnitude_model()) * m.signs())


def test_validate_rejects_negative_codebook():
    m = SSVQModel(np.array([[-1.0, 0.0]]), np.zeros(2, dtype=int), np.ones((2, 2)))
    with pytest.raises(NegativeEntry):
        m.validate()


def test_codebook_grads_match_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(20):
        O, I, d, K = rng.choice([2, 4]), rng.choice([4, 8]), rng.choice([2, 4]), rng.integers(1, 4)
        W = rng.normal(size=(O, I))
        m = ssvq_encode(W, min(K, O * I // d), d, seed=int(rng.integers(1000)))
        G = rng.normal(size=W.shape)

        def loss(cb):
            mm = SSVQModel(np.abs(cb), m.assignments, m.latent)  # cb stays > 0 near the base point
            return float(np.sum(G * ssvq_decode(mm)))

        base = m.codebook + 0.1  # keep away from the clamp at zero
        m2 = SSVQModel(base, m.assignments, m.latent)
        assert rel_err(ssvq_codebook_grads(G, m2), central_diff(loss, base)) < 1e-4


def test_ste_grad_and_frozen_zero():
    m = SSVQModel(np.array([[1.0, 2.0]]), np.array([0, 0]), np.array([[0.5, -0.5], [1.0, -1.0]]))
    G = np.array([[1.0, 1.0], [3.0, -1.0]])
    assert np.array_equal(ste_sign_grad(G, m), [[1.0, 2.0], [3.0, -2.0]])
    m.frozen[1, 0] = True
    assert ste_sign_grad(G, m)[1, 0] == 0.0


def test_opposite_moves_within_one_codeword():
    # two subvectors share one codeword but carry opposite signs
    m = SSVQModel(np.array([[1.0]]), np.array([0, 0]), np.array([[1.0, -1.0]]))
    before = ssvq_decode(m).copy()
    m.codebook -= 0.1 * ssvq_codebook_grads(np.array([[-1.0, 0.0]]), m)
    delta = ssvq_decode(m) - before
    assert delta[0, 0] > 0 > delta[0, 1]
    # plain VQ moves both members identically
    vq = m.magnitude_model()
    vq_before = vq_decode(vq).copy()
    vq.codebook -= 0.1
    assert np.ptp(vq_decode(vq) - vq_before) == 0


def test_project_codebook():
    m = SSVQModel(np.array([[-0.5, 0.2]]), np.array([0]), np.ones((1, 2)))
    project_codebook(m)
    assert np.array_equal(m.codebook, [[0.0, 0.2]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_decode_magnitude_and_sign_invariants(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(8, 8))
    m = ssvq_encode(W, int(rng.integers(1, 9)), 4, seed=seed)
    Wq = ssvq_decode(m)
    assert np.all(m.codebook >= 0)
    assert np.array_equal(np.abs(Wq), m.magnitudes())
    nz = Wq != 0
    assert np.array_equal(np.sign(Wq[nz]), np.sign(W[nz]))
