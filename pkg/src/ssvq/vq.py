"""Conventional vector quantization of a weight matrix.

Only the codebook is trainable under VQ: the gradient of codeword ``k`` is
the sum of the gradients of the subvectors assigned to it, which is why all
members of a cluster move together during fine-tuning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import kmeans, weighted_kmeans
from .core import as_weight_matrix, partition
from .errors import EmptyModel, IndexOutOfRange, ShapeMismatch

__all__ = [
    "VQModel",
    "vq_encode",
    "vq_decode",
    "accumulate_codeword_grads",
    "DominanceReport",
    "gradient_dominance_report",
]


@dataclass
class VQModel:
    codebook: np.ndarray  # (K, d)
    assignments: np.ndarray  # (N,) int64
    shape: tuple[int, int]

    @property
    def K(self) -> int:
        return self.codebook.shape[0]

    @property
    def d(self) -> int:
        return self.codebook.shape[1]

    @property
    def N(self) -> int:
        return len(self.assignments)

    def validate(self) -> None:
        O, I = self.shape
        if self.codebook.ndim != 2 or self.N * self.d != O * I:
            raise ShapeMismatch(
                f"{self.N} subvectors of dim {self.d} do not tile a {O}x{I} matrix"
            )
        if self.N and (self.assignments.min() < 0 or self.assignments.max() >= self.K):
            raise IndexOutOfRange(f"assignment outside [0, {self.K})")


def vq_encode(W, K: int, d: int, seed=0, *, weights=None, max_iters: int = 100,
              rel_tol: float = 1e-6) -> VQModel:
    """Cluster the length-``d`` subvectors of ``W`` into ``K`` codewords.

    ``weights`` optionally gives a per-subvector importance (e.g. summed
    squared gradients) and switches to weighted k-means.
    """
    W = as_weight_matrix(W)
    points = partition(W, d)
    if weights is None:
        codebook, a = kmeans(points, K, seed, max_iters, rel_tol)
    else:
        codebook, a = weighted_kmeans(points, weights, K, seed, max_iters, rel_tol)
    return VQModel(codebook, a, W.shape)


def vq_decode(m: VQModel) -> np.ndarray:
    m.validate()
    return m.codebook[m.assignments].reshape(m.shape)


def _segment_sum(values: np.ndarray, assignments: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K, values.shape[1]))
    np.add.at(out, assignments, values)
    return out


def accumulate_codeword_grads(g_W, m: VQModel, reduce: str = "sum") -> np.ndarray:
    """Per-codeword gradient: sum (or mean) of member subvector gradients.

    Codewords with no members get a zero gradient.
    """
    g_W = np.asarray(g_W, dtype=np.float64)
    if g_W.shape != tuple(m.shape):
        raise ShapeMismatch(f"gradient shape {g_W.shape} != weight shape {m.shape}")
    grads = _segment_sum(g_W.reshape(-1, m.d), m.assignments, m.K)
    if reduce == "mean":
        counts = np.bincount(m.assignments, minlength=m.K)
        grads[counts > 0] /= counts[counts > 0, None]
    elif reduce != "sum":
        raise ValueError(f"reduce must be 'sum' or 'mean', got {reduce!r}")
    return grads


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float("nan")
    return float(np.dot(a, b) / (na * nb))


@dataclass
class DominanceReport:
    """Mean cosine similarity between subset gradients and codeword gradients.

    ``per_codeword_*`` map a fraction to a length-``K`` array holding NaN for
    codewords that had too few members (or a zero gradient) to score.
    """

    top: dict[float, float] = field(default_factory=dict)
    bottom: dict[float, float] = field(default_factory=dict)
    per_codeword_top: dict[float, np.ndarray] = field(default_factory=dict)
    per_codeword_bottom: dict[float, np.ndarray] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = [{"subset": "top", "fraction": f, "cosine": v} for f, v in self.top.items()]
        out += [{"subset": "bottom", "fraction": f, "cosine": v} for f, v in self.bottom.items()]
        return out


def gradient_dominance_report(g_W, m: VQModel, top_fracs=(0.05, 0.10),
                              bottom_fracs=(0.60, 0.50)) -> DominanceReport:
    """Measure how far a few large member gradients dictate each codeword update.

    For every codeword the member gradients are ranked by L2 norm. The
    largest ``floor(frac * n)`` (resp. smallest) are summed and compared to
    the full codeword gradient by cosine similarity. Only codewords with at
    least ``ceil(1/frac)`` members take part in the average for ``frac``.
    """
    for f in (*top_fracs, *bottom_fracs):
        if not 0 < f <= 1:
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
    if m.N == 0 or m.K == 0:
        raise EmptyModel("model has no subvectors")
    g = np.asarray(g_W, dtype=np.float64)
    if g.shape != tuple(m.shape):
        raise ShapeMismatch(f"gradient shape {g.shape} != weight shape {m.shape}")
    g = g.reshape(-1, m.d)
    norms = np.linalg.norm(g, axis=1)

    members = [[] for _ in range(m.K)]
    for n, k in enumerate(m.assignments):
        members[k].append(n)

    report = DominanceReport()
    for fracs, largest, table, per in (
        (top_fracs, True, report.top, report.per_codeword_top),
        (bottom_fracs, False, report.bottom, report.per_codeword_bottom),
    ):
        for frac in fracs:
            scores = np.full(m.K, np.nan)
            need = math.ceil(1 / frac - 1e-12)
            for k, idx in enumerate(members):
                if len(idx) < need:
                    continue
                idx = np.asarray(idx)
                order = idx[np.argsort(-norms[idx] if largest else norms[idx], kind="stable")]
                count = max(1, int(math.floor(frac * len(idx) + 1e-12)))
                scores[k] = _cosine(g[order[:count]].sum(axis=0), g[idx].sum(axis=0))
            per[frac] = scores
            table[frac] = float(np.nanmean(scores)) if np.any(~np.isnan(scores)) else float("nan")
    return report
