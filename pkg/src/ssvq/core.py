"""Weight matrices, subvector partitioning and seeded random streams.

Weights are plain 2-D ``float64`` numpy arrays of shape ``(O, I)``.
Subvectors are taken in row-major scan order: subvector ``n`` holds the
flat entries ``n*d .. n*d + d - 1`` of ``W.ravel()``. The storage format
and every decoder depend on this order.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import NonDivisibleDimension, ShapeMismatch

__all__ = ["as_weight_matrix", "partition", "reassemble", "rng_for", "magnitudes_at"]


def as_weight_matrix(W) -> np.ndarray:
    """Validate ``W`` and return it as a C-contiguous float64 ``(O, I)`` array."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
        raise ShapeMismatch(f"expected a non-empty 2-D matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("weight matrix contains NaN or Inf")
    return W


def partition(W, d: int) -> np.ndarray:
    """Split ``W`` into ``N = O*I/d`` subvectors of length ``d``.

    Returns a new ``(N, d)`` array; the input is never aliased.

    Raises:
        NonDivisibleDimension: if ``d`` does not divide ``O*I``.
    """
    W = as_weight_matrix(W)
    d = int(d)
    if d < 1 or W.size % d:
        raise NonDivisibleDimension(f"d={d} does not divide O*I={W.size}")
    return W.reshape(-1, d).copy()


def reassemble(vectors, O: int, I: int) -> np.ndarray:
    """Inverse of :func:`partition`."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.size != O * I:
        raise ShapeMismatch(
            f"{vectors.shape} subvectors cannot fill a {O}x{I} matrix"
        )
    return vectors.reshape(O, I).copy()


def magnitudes_at(codebook: np.ndarray, assignments: np.ndarray, shape) -> np.ndarray:
    """Gather codewords per subvector and lay them out as an ``(O, I)`` matrix."""
    return codebook[assignments].reshape(shape)


def rng_for(seed: int, stream: str = "") -> np.random.Generator:
    """Return a Generator for a named sub-stream of ``seed``.

    Different stream names give statistically independent generators, so
    e.g. data sampling and clustering never share state.
    """
    key = (zlib.crc32(stream.encode()),) if stream else ()
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.default_rng(ss)
