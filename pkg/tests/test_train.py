import math

import numpy as np
import pytest

from ssvq.errors import NumericalOverflow, ShapeMismatch
from ssvq.freeze import FreezeConfig
from ssvq.signsplit import ssvq_decode
from ssvq.train import (
    ToyNet,
    TrainConfig,
    accuracy,
    adamw_step,
    cosine_lr,
    forward_backward,
    init_toynet,
    make_task,
    qat_train_ssvq,
    qat_train_vq,
    quantize_net,
    train_float,
)
from ssvq.vq import VQModel, vq_decode

from .oracles import adam_reference, central_diff, rel_err


def small_task(seed=0):
    return make_task(dim=6, n_classes=3, n_train=256, n_val=128, modes_per_class=2, seed=seed)


def test_task_is_reproducible():
    a, b = make_task(seed=4), make_task(seed=4)
    assert np.array_equal(a.X_train, b.X_train) and np.array_equal(a.y_val, b.y_val)
    assert not np.array_equal(a.X_train, make_task(seed=5).X_train)


def test_zero_net_loss_is_log_c():
    net = ToyNet([np.zeros((5, 4)), np.zeros((3, 5))], [np.zeros(5), np.zeros(3)])
    X = np.random.default_rng(0).normal(size=(10, 4))
    loss, _, _ = forward_backward(net.weights, net.biases, X, np.arange(10) % 3)
    assert loss == pytest.approx(math.log(3))


def test_single_layer_closed_form():
    W = np.array([[1.0, -1.0], [0.5, 2.0], [0.0, 0.3]])
    x = np.array([[0.7, -0.2]])
    z = W @ x[0]
    p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    _, gW, gb = forward_backward([W], [np.zeros(3)], x, np.array([1]))
    expected = np.outer(p - np.eye(3)[1], x[0])
    assert np.allclose(gW[0], expected, atol=1e-15)
    assert np.allclose(gb[0], p - np.eye(3)[1])


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(1)
    for trial in range(20):
        dims = (int(rng.integers(2, 6)), int(rng.integers(2, 7)), int(rng.integers(2, 7)), int(rng.integers(2, 5)))
        net = init_toynet(dims, seed=trial)
        net.biases = [rng.normal(scale=0.1, size=b.shape) for b in net.biases]
        X = rng.normal(size=(7, dims[0]))
        y = rng.integers(dims[-1], size=7)
        _, gW, gb = forward_backward(net.weights, net.biases, X, y)
        for i in range(len(dims) - 1):
            def loss_W(Wi, i=i):
                ws = list(net.weights)
                ws[i] = Wi
                return forward_backward(ws, net.biases, X, y)[0]

            def loss_b(bi, i=i):
                bs = list(net.biases)
                bs[i] = bi
                return forward_backward(net.weights, bs, X, y)[0]

            assert rel_err(gW[i], central_diff(loss_W, net.weights[i])) < 1e-4
            assert rel_err(gb[i], central_diff(loss_b, net.biases[i])) < 1e-4


def test_forward_backward_errors():
    net = init_toynet((2, 3, 2))
    with pytest.raises(ValueError):
        forward_backward(net.weights, net.biases, np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(ShapeMismatch):
        forward_backward(net.weights, net.biases, np.zeros((2, 2)), np.zeros(3, dtype=int))
    with pytest.raises(NumericalOverflow):
        forward_backward([np.full((2, 2), np.inf)], [np.zeros(2)], np.ones((1, 2)), np.array([0]))


def test_adamw_zero_grad_no_decay_is_noop():
    p = np.array([1.0, -2.0])
    adamw_step(p, np.zeros(2), (np.zeros(2), np.zeros(2)), 1, lr=0.1)
    assert np.array_equal(p, [1.0, -2.0])


def test_adamw_first_step_is_signed_lr():
    p = np.zeros(3)
    adamw_step(p, np.array([0.3, -5.0, 1e-3]), (np.zeros(3), np.zeros(3)), 1, lr=0.01)
    assert np.allclose(p, [-0.01, 0.01, -0.01], rtol=1e-4)


@pytest.mark.parametrize("wd", [0.0, 0.05])
def test_adamw_matches_reference_on_quadratic(wd):
    A = np.array([[3.0, 0.5], [0.5, 1.0]])

    def grad(x):
        return A @ x

    x = np.array([1.0, -2.0])
    moments = (np.zeros(2), np.zeros(2))
    ours = []
    for t in range(1, 11):
        adamw_step(x, grad(x), moments, t, lr=0.05, weight_decay=wd)
        ours.append(x.copy())
    ref = adam_reference([1.0, -2.0], grad, 10, lr=0.05, wd=wd)
    assert np.max(np.abs(np.array(ours) - ref)) < 1e-10


def test_cosine_lr():
    assert cosine_lr(1.0, 1, 10) == 1.0
    assert cosine_lr(1.0, 6, 10) == pytest.approx(0.5)
    assert cosine_lr(1.0, 6, 10, enabled=False) == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        TrainConfig(steps=0)


def _lossless_vq(net):
    """Each weight its own codeword: decode is the identity."""
    models = []
    for W in net.weights[:-1]:
        flat = W.reshape(-1, 1)
        models.append(VQModel(flat.copy(), np.arange(len(flat)), W.shape))
    return models


def test_lossless_vq_tracks_float_training():
    task = small_task()
    net = init_toynet((6, 8, 8, 3), seed=0)
    cfg = TrainConfig(lr=1e-2, steps=10, seed=0)
    ref = train_float(net, task, cfg)
    vq = qat_train_vq(net, task, 0, 1, cfg, models=_lossless_vq(net))
    assert np.allclose([r["loss"] for r in vq.trace], [r["loss"] for r in ref.trace], rtol=0, atol=1e-9)
    for a, b in zip(vq.net.weights, ref.net.weights):
        assert np.allclose(a, b, atol=1e-9)


def test_zero_lr_keeps_post_quantization_accuracy():
    task = small_task(1)
    net = train_float(init_toynet((6, 16, 16, 3), 1), task, TrainConfig(lr=1e-2, steps=200, seed=1)).net
    r = qat_train_vq(net, task, 8, 2, TrainConfig(lr=0.0, steps=20, seed=1))
    assert r.final_val_acc == r.initial_val_acc
    assert len({r_["loss"] for r_ in r.trace}) > 1  # different batches, same weights
    models = quantize_net(net, "vq", 8, 2, seed=1)
    weights = [vq_decode(m) for m in models] + [net.weights[-1]]
    assert accuracy(weights, net.biases, task.X_val, task.y_val) == r.initial_val_acc


def test_vq_members_receive_identical_updates():
    task = small_task(2)
    net = init_toynet((6, 8, 8, 3), seed=2)
    models = quantize_net(net, "vq", 4, 2, seed=2)
    r = qat_train_vq(net, task, 4, 2, TrainConfig(lr=1e-2, steps=5, seed=2), models=models)
    for before, after in zip(models, r.models):
        delta = (vq_decode(after) - vq_decode(before)).reshape(-1, 2)
        for k in range(before.K):
            rows = delta[before.assignments == k]
            assert np.allclose(rows, rows[0])


def test_ssvq_zero_sign_lr_keeps_signs():
    task = small_task(3)
    net = init_toynet((6, 8, 8, 3), seed=3)
    models = quantize_net(net, "ssvq", 4, 2, seed=3)
    r = qat_train_ssvq(net, task, 4, 2, 1.0, TrainConfig(lr=1e-2, lr_signs=0.0, steps=30, seed=3),
                       FreezeConfig(interval=10), models=models)
    for before, after in zip(models, r.models):
        assert np.array_equal(before.latent, after.latent)
        assert np.all(after.codebook >= 0)
    assert all(rec["sign_flip_count"] == 0 for rec in r.trace)


def test_ssvq_effective_weights_are_decoded_model():
    task = small_task(4)
    net = init_toynet((6, 8, 8, 3), seed=4)
    r = qat_train_ssvq(net, task, 4, 2, 1.0, TrainConfig(lr=1e-2, lr_signs=0.05, steps=40, seed=4),
                       FreezeConfig(interval=10, t_start=0.0, t_end=0.0))
    for W, m in zip(r.net.weights, r.models):
        assert np.array_equal(W, ssvq_decode(m))
    assert r.trace[-1]["frozen_count"] > 0
    assert r.trace[-1]["frozen_count"] == sum(int(m.frozen.sum()) for m in r.models)
    assert {e.layer for e in r.freeze_log} <= {0, 1}


def test_runs_are_deterministic():
    task = small_task(5)
    net = init_toynet((6, 8, 8, 3), seed=5)
    cfg = TrainConfig(lr=1e-2, lr_signs=0.05, steps=25, seed=5)
    a = qat_train_ssvq(net, task, 4, 2, 1.0, cfg, FreezeConfig(interval=5))
    b = qat_train_ssvq(net, task, 4, 2, 1.0, cfg, FreezeConfig(interval=5))
    assert a.trace == b.trace and a.freeze_log == b.freeze_log
