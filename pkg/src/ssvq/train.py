"""Desk-scale quantization-aware training.

A small ReLU classifier (default ``16 -> 64 -> 64 -> 8``) is trained with
hand-written backprop and AdamW under a cosine learning-rate schedule.
Every hidden layer is held in compressed form during fine-tuning, either as
a VQ codebook or as an SSVQ codebook plus latent signs; biases and the final
classifier stay full precision and trainable.

The effective weights used in every forward pass are always
``decode(model)``: there is no hidden dense copy drifting underneath.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import rng_for
from .errors import NumericalOverflow, ShapeMismatch
from .freeze import FreezeConfig, FreezeEvent, FreezeState, freeze_step
from .signsplit import (
    SSVQModel,
    project_codebook,
    sign,
    ssvq_codebook_grads,
    ssvq_decode,
    ssvq_encode,
    ste_sign_grad,
)
from .vq import VQModel, accumulate_codeword_grads, vq_decode, vq_encode

__all__ = [
    "SyntheticTask",
    "make_task",
    "ToyNet",
    "init_toynet",
    "forward",
    "forward_backward",
    "accuracy",
    "TrainConfig",
    "adamw_step",
    "cosine_lr",
    "TrainResult",
    "train_float",
    "quantize_net",
    "qat_train_vq",
    "qat_train_ssvq",
    "write_jsonl",
    "pretrain",
    "run_experiment",
    "desk_configs",
]


# -- data ---------------------------------------------------------------------


@dataclass
class SyntheticTask:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    n_classes: int
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.X_train.shape[1]


def make_task(dim: int = 16, n_classes: int = 8, n_train: int = 4096, n_val: int = 1024,
              noise: float = 0.5, modes_per_class: int = 8, spread: float = 1.0,
              seed: int = 0) -> SyntheticTask:
    """Gaussian-mixture classification: each class is ``modes_per_class`` blobs.

    Mode centres are drawn once from ``N(0, spread^2)``; samples add isotropic
    noise of std ``noise``. Train and validation sets are separate draws.
    """
    rng = rng_for(seed, "data")
    centres = rng.normal(0.0, spread, size=(n_classes, modes_per_class, dim))

    def draw(n):
        y = rng.integers(n_classes, size=n)
        mode = rng.integers(modes_per_class, size=n)
        X = centres[y, mode] + rng.normal(0.0, noise, size=(n, dim))
        return X, y

    X_train, y_train = draw(n_train)
    X_val, y_val = draw(n_val)
    params = dict(dim=dim, n_classes=n_classes, n_train=n_train, n_val=n_val, noise=noise,
                  modes_per_class=modes_per_class, spread=spread, seed=seed)
    return SyntheticTask(X_train, y_train, X_val, y_val, n_classes, params)


# -- network ------------------------------------------------------------------


@dataclass
class ToyNet:
    weights: list  # per layer (out, in)
    biases: list  # per layer (out,)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def copy(self) -> "ToyNet":
        return ToyNet([W.copy() for W in self.weights], [b.copy() for b in self.biases])


def init_toynet(dims=(16, 64, 64, 8), seed: int = 0) -> ToyNet:
    rng = rng_for(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ToyNet(weights, biases)


def forward(weights, biases, X) -> np.ndarray:
    h = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W.T + b
        if i < len(weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def forward_backward(weights, biases, X, y):
    """Mean softmax cross-entropy and its gradients.

    Returns:
        ``(loss, grads_W, grads_b)`` with one gradient per layer.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("empty batch")
    if len(X) != len(y):
        raise ShapeMismatch("inputs and labels differ in length")
    acts, pre = [X], []
    h = X
    L = len(weights)
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < L - 1 else z
        acts.append(h)
    logits = acts[-1]
    B = len(X)
    with np.errstate(invalid="ignore", over="ignore"):
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(logsum - shifted[np.arange(B), y]))
    if not math.isfinite(loss):
        raise NumericalOverflow("loss is not finite")

    dz = np.exp(shifted - logsum[:, None])
    dz[np.arange(B), y] -= 1.0
    dz /= B
    grads_W, grads_b = [None] * L, [None] * L
    for i in range(L - 1, -1, -1):
        grads_W[i] = dz.T @ acts[i]
        grads_b[i] = dz.sum(axis=0)
        if i:
            dz = (dz @ weights[i]) * (pre[i - 1] > 0)
    return loss, grads_W, grads_b


def accuracy(weights, biases, X, y) -> float:
    return float(np.mean(np.argmax(forward(weights, biases, X), axis=1) == y))


# -- optimisation -------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-3
    lr_signs: float = 2e-4
    weight_decay: float = 0.0
    batch_size: int = 128
    steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    cosine: bool = True
    seed: int = 0
    eval_every: int = 0

    def __post_init__(self):
        if not self.lr >= 0 or not self.lr_signs >= 0:
            raise ValueError("learning rates must be non-negative")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")


def cosine_lr(base: float, t: int, total: int, enabled: bool = True) -> float:
    """Learning rate for step ``t`` (1-based), annealed from ``base`` toward 0."""
    if not enabled:
        return base
    return base * 0.5 * (1 + math.cos(math.pi * (t - 1) / total))


def adamw_step(param, grad, moments, t: int, lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One in-place AdamW update with decoupled weight decay.

    ``moments`` is a ``(m, v)`` pair of arrays updated in place.
    """
    m, v = moments
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    if weight_decay:
        param -= lr * weight_decay * param
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class _Optim:
    """AdamW state for a named set of parameters."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.moments: dict[str, tuple] = {}

    def step(self, name, param, grad, t, lr, weight_decay):
        if name not in self.moments:
            self.moments[name] = (np.zeros_like(param), np.zeros_like(param))
        c = self.cfg
        adamw_step(param, grad, self.moments[name], t, lr, c.beta1, c.beta2, c.eps, weight_decay)


def _batches(task: SyntheticTask, cfg: TrainConfig):
    rng = rng_for(cfg.seed, "batches")
    n = len(task.X_train)
    while True:
        idx = rng.integers(n, size=min(cfg.batch_size, n))
        yield task.X_train[idx], task.y_train[idx]


# -- training loops -----------------------------------------------------------


@dataclass
class TrainResult:
    trace: list
    net: ToyNet  # effective (decoded) weights at the end
    models: list = field(default_factory=list)
    initial_val_acc: float = float("nan")
    final_val_acc: float = float("nan")
    freeze_log: list = field(default_factory=list)

    def summary(self) -> dict:
        last = self.trace[-1] if self.trace else {}
        return {
            "initial_val_acc": self.initial_val_acc,
            "final_val_acc": self.final_val_acc,
            "final_loss": last.get("loss"),
            "frozen_count": last.get("frozen_count", 0),
            "freeze_events": len(self.freeze_log),
        }


def _record(step, loss, lr, val_acc=None, frozen=0, flips=0):
    return {"step": step, "loss": loss, "lr": lr, "val_acc": val_acc,
            "frozen_count": int(frozen), "sign_flip_count": int(flips)}


def _want_eval(cfg: TrainConfig, t: int) -> bool:
    return t == cfg.steps or (cfg.eval_every and t % cfg.eval_every == 0)


def train_float(net: ToyNet, task: SyntheticTask, cfg: TrainConfig) -> TrainResult:
    """Plain full-precision training of every parameter."""
    net = net.copy()
    opt = _Optim(cfg)
    batches = _batches(task, cfg)
    trace = []
    init_acc = accuracy(net.weights, net.biases, task.X_val, task.y_val)
    for t in range(1, cfg.steps + 1):
        X, y = next(batches)
        loss, gW, gb = forward_backward(net.weights, net.biases, X, y)
        lr = cosine_lr(cfg.lr, t, cfg.steps, cfg.cosine)
        for i in range(len(net.weights)):
            opt.step(f"W{i}", net.weights[i], gW[i], t, lr, cfg.weight_decay)
            opt.step(f"b{i}", net.biases[i], gb[i], t, lr, 0.0)
        acc = accuracy(net.weights, net.biases, task.X_val, task.y_val) if _want_eval(cfg, t) else None
        trace.append(_record(t, loss, lr, acc))
    return TrainResult(trace, net, [], init_acc, trace[-1]["val_acc"])


def quantize_net(net: ToyNet, method: str, K: int, d: int, alpha: float = 1.0, seed: int = 0,
                 layers=None) -> list:
    """Compress the selected layers (default: all but the classifier)."""
    layers = range(len(net.weights) - 1) if layers is None else layers
    out = []
    for i in layers:
        layer_seed = rng_for(seed, f"clustering/{i}")
        if method == "vq":
            out.append(vq_encode(net.weights[i], K, d, layer_seed))
        elif method == "ssvq":
            out.append(ssvq_encode(net.weights[i], K, d, alpha, layer_seed))
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def _decoded(net: ToyNet, models) -> list:
    weights = list(net.weights)
    for i, m in enumerate(models):
        weights[i] = vq_decode(m) if isinstance(m, VQModel) else ssvq_decode(m)
    return weights


def _step_head(net, opt, gW, gb, t, lr, cfg, n_quant):
    for i in range(n_quant, len(net.weights)):
        opt.step(f"W{i}", net.weights[i], gW[i], t, lr, cfg.weight_decay)
    for i in range(len(net.biases)):
        opt.step(f"b{i}", net.biases[i], gb[i], t, lr, 0.0)


def _finish(net, models, task, trace, init_acc, freeze_log=None):
    final = ToyNet(_decoded(net, models), [b.copy() for b in net.biases])
    return TrainResult(trace, final, models, init_acc, trace[-1]["val_acc"], freeze_log or [])


def qat_train_vq(net: ToyNet, task: SyntheticTask, K: int, d: int, cfg: TrainConfig,
                 models=None) -> TrainResult:
    """Fine-tune VQ codebooks (plus biases and classifier) with summed codeword grads.

    ``models`` may supply already-encoded layers; otherwise the hidden layers
    of ``net`` are encoded with ``K``/``d``.
    """
    net = net.copy()
    models = quantize_net(net, "vq", K, d, seed=cfg.seed) if models is None else copy.deepcopy(models)
    n_quant = len(models)
    opt = _Optim(cfg)
    batches = _batches(task, cfg)
    weights = _decoded(net, models)
    init_acc = accuracy(weights, net.biases, task.X_val, task.y_val)
    trace = []
    for t in range(1, cfg.steps + 1):
        X, y = next(batches)
        loss, gW, gb = forward_backward(weights, net.biases, X, y)
        lr = cosine_lr(cfg.lr, t, cfg.steps, cfg.cosine)
        for i, m in enumerate(models):
            opt.step(f"C{i}", m.codebook, accumulate_codeword_grads(gW[i], m), t, lr, cfg.weight_decay)
        _step_head(net, opt, gW, gb, t, lr, cfg, n_quant)
        weights = _decoded(net, models)
        acc = accuracy(weights, net.biases, task.X_val, task.y_val) if _want_eval(cfg, t) else None
        trace.append(_record(t, loss, lr, acc))
    return _finish(net, models, task, trace, init_acc)


def qat_train_ssvq(net: ToyNet, task: SyntheticTask, K: int, d: int, alpha: float,
                   cfg: TrainConfig, freeze_cfg: FreezeConfig | None = None,
                   models=None, on_step=None) -> TrainResult:
    """Jointly fine-tune SSVQ codebooks and latent signs, freezing oscillating signs.

    Per step: forward with decoded weights, backprop, AdamW on codebooks
    (``lr``), latent signs (``lr_signs``, never weight-decayed), biases and
    the classifier; clamp codebooks at zero; then run the freezing update.

    Args:
        on_step: optional ``f(t, signs_seen, models)`` called after every
            step, where ``signs_seen`` holds each layer's signs as the
            freezing update saw them (before any new freeze was applied).
    """
    freeze_cfg = FreezeConfig() if freeze_cfg is None else freeze_cfg
    net = net.copy()
    models = quantize_net(net, "ssvq", K, d, alpha, seed=cfg.seed) if models is None else copy.deepcopy(models)
    n_quant = len(models)
    opt = _Optim(cfg)
    states = [FreezeState(m.latent, freeze_cfg, cfg.steps, m.frozen) for m in models]
    batches = _batches(task, cfg)
    weights = _decoded(net, models)
    init_acc = accuracy(weights, net.biases, task.X_val, task.y_val)
    trace, log = [], []
    for t in range(1, cfg.steps + 1):
        X, y = next(batches)
        loss, gW, gb = forward_backward(weights, net.biases, X, y)
        lr = cosine_lr(cfg.lr, t, cfg.steps, cfg.cosine)
        lr_s = cosine_lr(cfg.lr_signs, t, cfg.steps, cfg.cosine)
        flips = 0
        seen = []
        for i, m in enumerate(models):
            g_cb = ssvq_codebook_grads(gW[i], m)
            g_ls = ste_sign_grad(gW[i], m)
            before = m.signs()
            opt.step(f"C{i}", m.codebook, g_cb, t, lr, cfg.weight_decay)
            opt.step(f"L{i}", m.latent, g_ls, t, lr_s, 0.0)
            project_codebook(m)
            flips += int(np.count_nonzero(m.signs() != before))
            if on_step is not None:
                seen.append(m.signs())
            log.extend(replace(e, layer=i) for e in freeze_step(states[i], m.latent, t))
            m.frozen |= states[i].frozen
        _step_head(net, opt, gW, gb, t, lr, cfg, n_quant)
        weights = _decoded(net, models)
        acc = accuracy(weights, net.biases, task.X_val, task.y_val) if _want_eval(cfg, t) else None
        frozen = sum(int(m.frozen.sum()) for m in models)
        trace.append(_record(t, loss, lr, acc, frozen, flips))
        if on_step is not None:
            on_step(t, seen, models)
    return _finish(net, models, task, trace, init_acc, log)


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            if isinstance(r, FreezeEvent):
                fh.write(r.to_json() + "\n")
            else:
                fh.write(json.dumps(r if isinstance(r, dict) else asdict(r)) + "\n")


# -- experiments --------------------------------------------------------------


def pretrain(task: SyntheticTask, seed: int = 0, steps: int = 3000, lr: float = 3e-3,
             dims=None) -> TrainResult:
    """Train the float starting point that every compression arm fine-tunes."""
    dims = (task.dim, 64, 64, task.n_classes) if dims is None else dims
    return train_float(init_toynet(dims, seed), task, TrainConfig(lr=lr, steps=steps, seed=seed))


def run_experiment(method: str, K: int, d: int, cfg: TrainConfig, *, alpha: float = 1.0,
                   freeze_cfg: FreezeConfig | None = None, task: SyntheticTask | None = None,
                   pretrained: ToyNet | None = None, pretrain_steps: int = 3000) -> TrainResult:
    """Pretrain (unless given), compress, and fine-tune one arm with seed ``cfg.seed``."""
    task = make_task(seed=cfg.seed) if task is None else task
    if pretrained is None:
        pretrained = pretrain(task, cfg.seed, pretrain_steps).net
    if method == "vq":
        return qat_train_vq(pretrained, task, K, d, cfg)
    if method == "ssvq":
        return qat_train_ssvq(pretrained, task, K, d, alpha, cfg, freeze_cfg)
    if method == "float":
        return train_float(pretrained, task, cfg)
    raise ValueError(f"unknown method {method!r}")


def desk_configs(seed: int = 0, steps: int = 1000) -> tuple[TrainConfig, FreezeConfig]:
    """Settings tuned for the toy task (1000 steps instead of ~50k ImageNet steps).

    The latent-sign learning rate is raised well above the large-model value
    so signs actually move in a short run, and the freeze interval shrinks
    with the step budget.
    """
    return TrainConfig(lr=2e-3, lr_signs=0.03, steps=steps, seed=seed), FreezeConfig(interval=200)
