"""Iterative freezing of learnable signs.

Every iteration the per-position flip indicator feeds an exponential moving
average ``f`` (the oscillation frequency). While ``f`` is non-zero the
current polarity is tallied into positive/negative vote counters. Every
``interval`` iterations, unfrozen positions whose ``f`` exceeds a cosine-
decayed threshold are frozen for good to their majority-voted sign.

The ``"ema"`` criterion replaces the majority vote with the sign of an EMA
of the sign itself (the two-EMA scheme used for oscillating uniform
quantizers); it exists for ablations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import OutOfRange, ShapeMismatch
from .signsplit import sign

__all__ = [
    "ThresholdSchedule",
    "cosine_threshold",
    "majority_vote",
    "FreezeConfig",
    "FreezeEvent",
    "FreezeState",
    "freeze_step",
]


@dataclass(frozen=True)
class ThresholdSchedule:
    t_start: float = 0.04
    t_end: float = 0.005
    total_steps: int = 1

    def __post_init__(self):
        if not (0 <= self.t_start <= 1 and 0 <= self.t_end <= 1):
            raise ValueError("threshold endpoints must lie in [0, 1]")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


def cosine_threshold(t: float, schedule: ThresholdSchedule) -> float:
    """Threshold at step ``t``: ``t_start`` at 0, ``t_end`` at ``total_steps``."""
    T = schedule.total_steps
    if not 0 <= t <= T:
        raise OutOfRange(f"step {t} outside [0, {T}]")
    return schedule.t_end + 0.5 * (schedule.t_start - schedule.t_end) * (1 + math.cos(math.pi * t / T))


def majority_vote(p_c, n_c, current_sign, strict: bool = False):
    """+1 if ``p_c > n_c``, -1 if ``n_c > p_c``; ties keep ``current_sign``.

    With ``strict=True`` ties resolve to -1, the literal if/else reading.
    Works elementwise on arrays.
    """
    p_c, n_c = np.asarray(p_c), np.asarray(n_c)
    tie = np.full(np.broadcast(p_c, n_c).shape, -1) if strict else np.asarray(current_sign)
    out = np.where(p_c > n_c, 1, np.where(n_c > p_c, -1, tie)).astype(np.int8)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FreezeConfig:
    interval: int = 500
    momentum: float = 0.99
    t_start: float = 0.04
    t_end: float = 0.005
    criterion: str = "msv"
    strict_ties: bool = False
    enabled: bool = True

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError("freeze interval must be >= 1")
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        if self.criterion not in ("msv", "ema"):
            raise ValueError(f"unknown freeze criterion {self.criterion!r}")

    def schedule(self, total_steps: int) -> ThresholdSchedule:
        return ThresholdSchedule(self.t_start, self.t_end, total_steps)


@dataclass(frozen=True)
class FreezeEvent:
    iteration: int
    row: int
    col: int
    frozen_sign: int
    f: float
    p_c: int
    n_c: int
    layer: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self))


class FreezeState:
    """Per-position freezing statistics for one latent-sign tensor."""

    def __init__(self, latent, config: FreezeConfig, total_steps: int, frozen=None):
        latent = np.asarray(latent)
        self.config = config
        self.schedule = config.schedule(total_steps)
        self.f = np.zeros(latent.shape)
        self.p_c = np.zeros(latent.shape, dtype=np.int64)
        self.n_c = np.zeros(latent.shape, dtype=np.int64)
        self.frozen = np.zeros(latent.shape, dtype=bool) if frozen is None else np.array(frozen, dtype=bool)
        self.prev_sign = sign(latent)
        self.sign_ema = self.prev_sign.astype(np.float64)

    @property
    def shape(self):
        return self.f.shape


def freeze_step(state: FreezeState, latent: np.ndarray, t: int) -> list[FreezeEvent]:
    """Advance the freezing statistics after the ``t``-th latent update.

    Newly frozen positions get ``latent`` overwritten in place with
    ``+inf``/``-inf`` and are marked in ``state.frozen``.

    Returns:
        One :class:`FreezeEvent` per position frozen by this call.
    """
    if latent.shape != state.shape:
        raise ShapeMismatch(f"latent shape {latent.shape} != state shape {state.shape}")
    if t < 1:
        raise ValueError("iterations are counted from 1")
    cfg = state.config
    m = cfg.momentum

    cur = sign(latent)
    live = ~state.frozen
    flipped = (cur != state.prev_sign) & live
    state.f *= m
    state.f += flipped * (1 - m)
    gate = (state.f != 0) & live
    state.p_c += gate & (cur > 0)
    state.n_c += gate & (cur < 0)
    if cfg.criterion == "ema":
        state.sign_ema[live] = m * state.sign_ema[live] + (1 - m) * cur[live]
    state.prev_sign = cur

    if not cfg.enabled or t % cfg.interval:
        return []
    threshold = cosine_threshold(min(t, state.schedule.total_steps), state.schedule)
    newly = live & (state.f > threshold)
    if not np.any(newly):
        return []
    if cfg.criterion == "msv":
        target = majority_vote(state.p_c, state.n_c, cur, strict=cfg.strict_ties)
    else:
        target = sign(state.sign_ema)
    target = np.asarray(target)
    latent[newly] = np.where(target[newly] > 0, np.inf, -np.inf)
    state.frozen |= newly
    state.prev_sign = sign(latent)
    rows, cols = np.nonzero(newly)
    return [
        FreezeEvent(t, int(r), int(c), int(target[r, c]), float(state.f[r, c]),
                    int(state.p_c[r, c]), int(state.n_c[r, c]))
        for r, c in zip(rows, cols)
    ]
