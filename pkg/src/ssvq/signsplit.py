"""Sign-splitting vector quantization.

Weights are decoupled into a per-scalar sign and a magnitude. Only the
magnitudes ``|W|`` are clustered, so every codeword is non-negative. The sign
of each weight comes from a continuous latent tensor ``Ls`` (initialised to
``alpha * W``) and is trained with a straight-through estimator::

    W_q  = C[A] * sign(Ls)
    g_Ls = g_Wq * C[A]          (per-position codeword magnitude)
    g_C  = segment_sum(g_Wq * sign(Ls))

Frozen signs are stored as ``+/-inf`` in ``Ls`` together with a boolean
``frozen`` mask; the mask is what the rest of the code trusts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import kmeans, weighted_kmeans
from .core import as_weight_matrix, partition
from .errors import IndexOutOfRange, NegativeEntry, ShapeMismatch
from .vq import VQModel, accumulate_codeword_grads

__all__ = [
    "sign",
    "SSVQModel",
    "ssvq_encode",
    "ssvq_decode",
    "ste_sign_grad",
    "ssvq_codebook_grads",
    "project_codebook",
]


def sign(x):
    """Elementwise sign with ``sign(0) == +1``; returns int8 values in {-1, +1}."""
    x = np.asarray(x)
    return np.where(x >= 0, 1, -1).astype(np.int8)


@dataclass
class SSVQModel:
    codebook: np.ndarray  # (K, d), non-negative
    assignments: np.ndarray  # (N,) int64
    latent: np.ndarray  # (O, I) latent signs Ls
    alpha: float = 1.0
    frozen: np.ndarray = field(default=None)  # (O, I) bool

    def __post_init__(self):
        self.latent = np.asarray(self.latent, dtype=np.float64)
        if self.frozen is None:
            self.frozen = np.zeros(self.latent.shape, dtype=bool)

    @property
    def shape(self) -> tuple[int, int]:
        return self.latent.shape

    @property
    def K(self) -> int:
        return self.codebook.shape[0]

    @property
    def d(self) -> int:
        return self.codebook.shape[1]

    @property
    def N(self) -> int:
        return len(self.assignments)

    def signs(self) -> np.ndarray:
        return sign(self.latent)

    def magnitudes(self) -> np.ndarray:
        """Assigned codeword magnitude at each weight position, shape ``(O, I)``."""
        self.validate()
        return self.codebook[self.assignments].reshape(self.shape)

    def magnitude_model(self) -> VQModel:
        return VQModel(self.codebook, self.assignments, self.shape)

    def validate(self) -> None:
        O, I = self.shape
        if self.codebook.ndim != 2 or self.N * self.d != O * I:
            raise ShapeMismatch(
                f"{self.N} subvectors of dim {self.d} do not tile a {O}x{I} matrix"
            )
        if self.frozen.shape != self.latent.shape:
            raise ShapeMismatch("frozen mask and latent signs differ in shape")
        if self.N and (self.assignments.min() < 0 or self.assignments.max() >= self.K):
            raise IndexOutOfRange(f"assignment outside [0, {self.K})")
        if np.any(self.codebook < 0):
            raise NegativeEntry("SSVQ codebook entries must be non-negative")


def ssvq_encode(W, K: int, d: int, alpha: float = 1.0, seed=0, *, weights=None,
                max_iters: int = 100, rel_tol: float = 1e-6) -> SSVQModel:
    """Cluster ``|W|`` into ``K`` codewords of size ``d``; set ``Ls = alpha * W``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    W = as_weight_matrix(W)
    points = partition(np.abs(W), d)
    if weights is None:
        codebook, a = kmeans(points, K, seed, max_iters, rel_tol)
    else:
        codebook, a = weighted_kmeans(points, weights, K, seed, max_iters, rel_tol)
    # centroids of non-negative points are non-negative; clamp away -0.0
    codebook = np.maximum(codebook, 0.0)
    return SSVQModel(codebook, a, alpha * W, float(alpha))


def ssvq_decode(m: SSVQModel) -> np.ndarray:
    return m.magnitudes() * m.signs()


def _check_grad(g, m: SSVQModel) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != m.shape:
        raise ShapeMismatch(f"gradient shape {g.shape} != weight shape {m.shape}")
    return g


def ste_sign_grad(g_Wq, m: SSVQModel) -> np.ndarray:
    """Straight-through gradient for ``Ls``: ``g_Wq`` scaled by the codeword magnitude.

    Frozen positions always receive exactly zero.
    """
    g = _check_grad(g_Wq, m) * m.magnitudes()
    g[m.frozen] = 0.0
    return g


def ssvq_codebook_grads(g_Wq, m: SSVQModel) -> np.ndarray:
    """Exact codebook gradient through ``W_q = C[A] * sign(Ls)``."""
    g = _check_grad(g_Wq, m) * m.signs()
    return accumulate_codeword_grads(g, m.magnitude_model())


def project_codebook(m: SSVQModel) -> None:
    """Clamp codebook entries at zero in place (keeps the sign out of the codebook)."""
    np.maximum(m.codebook, 0.0, out=m.codebook)
