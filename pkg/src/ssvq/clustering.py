"""Lloyd k-means with k-means++ seeding, plus a per-point weighted variant.

The weighted variant minimises ``sum_i h_i * ||w_i - c_A(i)||^2`` where
``h_i`` is typically a diagonal Hessian (or squared-gradient) estimate.
With uniform weights it falls back to the unweighted code path so both give
bit-identical results for the same seed.

Conventions kept fixed for reproducibility:

* distance ties go to the lowest codeword index;
* an empty cluster is repaired by moving the point farthest from its
  centroid into it, so exactly ``K`` codewords always exist;
* iteration stops when assignments stop changing, when the relative
  objective improvement drops below ``rel_tol``, or after ``max_iters``.
"""

from __future__ import annotations

import numpy as np

from .core import rng_for
from .errors import AllZeroWeights, ShapeMismatch, TooManyClusters

__all__ = [
    "kmeans_pp_init",
    "assign",
    "lloyd",
    "kmeans",
    "weighted_kmeans",
    "clustering_mse",
]

_CHUNK_ELEMS = 1 << 22


def _as_points(points) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ShapeMismatch(f"points must be a non-empty (N, d) array, got {points.shape}")
    return points


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_for(seed, "clustering")


def _check_k(K: int, N: int) -> int:
    K = int(K)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if K > N:
        raise TooManyClusters(f"K={K} exceeds the number of points N={N}")
    return K


def _check_weights(weights, N: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (N,):
        raise ShapeMismatch(f"expected {N} point weights, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("point weights must be finite and non-negative")
    if not np.any(weights > 0):
        raise AllZeroWeights("all point weights are zero")
    return weights


def _sqdist_to(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center
    return np.einsum("nd,nd->n", diff, diff)


def _pick(rng: np.random.Generator, potential: np.ndarray) -> int:
    cum = np.cumsum(potential)
    r = rng.random() * cum[-1]
    return int(min(np.searchsorted(cum, r, side="right"), len(cum) - 1))


def kmeans_pp_init(points, K: int, seed=0, weights=None) -> np.ndarray:
    """Draw ``K`` initial centers with D^2 weighting (k-means++).

    Without ``weights`` the first center is uniform over points; with
    ``weights`` both the first draw and the D^2 potential are scaled by the
    per-point weight. If every remaining point already coincides with a
    chosen center the next pick is uniform over unchosen points, so at
    ``K == N`` each point is selected exactly once.

    Returns:
        ``(K, d)`` array of centers copied from ``points``.
    """
    points = _as_points(points)
    N = len(points)
    K = _check_k(K, N)
    rng = _as_rng(seed)
    w = None if weights is None else _check_weights(weights, N)

    chosen = np.zeros(N, dtype=bool)
    first = int(rng.integers(N)) if w is None else _pick(rng, w)
    idx = [first]
    chosen[first] = True
    closest = _sqdist_to(points, points[first])
    for _ in range(1, K):
        potential = closest if w is None else w * closest
        if potential.sum() > 0:
            nxt = _pick(rng, potential)
        else:
            free = np.flatnonzero(~chosen)
            nxt = int(free[rng.integers(len(free))])
        idx.append(nxt)
        chosen[nxt] = True
        np.minimum(closest, _sqdist_to(points, points[nxt]), out=closest)
    return points[idx].copy()


def _exact_dist(points, codebook):
    diff = points[:, None, :] - codebook[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(points, codebook) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-codeword assignment, ties to the lowest index.

    Distances are screened with the fast ``|c|^2 - 2 x.c`` expansion. Rows
    where another codeword lies within the rounding-error bound of the best
    one are recomputed with exact differences, so the result is the same as
    a direct ``argmin`` over ``|x - c|^2``.

    Returns:
        ``(assignments, sqdist)``: int64 indices and the squared distance of
        each point to its codeword.
    """
    points = _as_points(points)
    codebook = np.asarray(codebook, dtype=np.float64)
    N, d = points.shape
    K = len(codebook)
    out = np.empty(N, dtype=np.int64)
    c2 = np.einsum("kd,kd->k", codebook, codebook)
    x2 = np.einsum("nd,nd->n", points, points)
    slack = 1e-9 * (d + 1) * (x2 + c2.max())
    step = max(1, _CHUNK_ELEMS // max(1, K))
    for s in range(0, N, step):
        approx = c2[None, :] - 2.0 * (points[s : s + step] @ codebook.T)
        a = np.argmin(approx, axis=1)
        best = approx[np.arange(len(a)), a]
        close = np.count_nonzero(approx <= (best + slack[s : s + step])[:, None], axis=1) > 1
        if np.any(close):
            rows = np.flatnonzero(close)
            a[rows] = np.argmin(_exact_dist(points[s + rows], codebook), axis=1)
        out[s : s + step] = a
    diff = points - codebook[out]
    return out, np.einsum("nd,nd->n", diff, diff)


def _update(points, a, centers, w):
    K, d = centers.shape
    counts = np.bincount(a, minlength=K)
    new = centers.copy()
    live = counts > 0
    if w is None:
        sums = np.stack([np.bincount(a, weights=points[:, j], minlength=K) for j in range(d)], axis=1)
        new[live] = sums[live] / counts[live, None]
    else:
        wsum = np.bincount(a, weights=w, minlength=K)
        sums = np.stack([np.bincount(a, weights=w * points[:, j], minlength=K) for j in range(d)], axis=1)
        heavy = wsum > 0
        new[heavy] = sums[heavy] / wsum[heavy, None]
        # members that all carry zero weight: any centroid is optimal, use the plain mean
        light = live & ~heavy
        if np.any(light):
            plain = np.stack([np.bincount(a, weights=points[:, j], minlength=K) for j in range(d)], axis=1)
            new[light] = plain[light] / counts[light, None]
    return new, counts


def _repair_empty(points, a, centers, counts, w):
    """Fill each empty cluster with the point farthest from its own centroid."""
    for k in np.flatnonzero(counts == 0):
        cost = np.einsum("nd,nd->n", points - centers[a], points - centers[a])
        if w is not None:
            cost = cost * w
        cost[counts[a] <= 1] = -1.0
        p = int(np.argmax(cost))
        if cost[p] <= 0:
            continue
        donor = a[p]
        a[p] = k
        counts[donor] -= 1
        counts[k] = 1
        centers[k] = points[p]
        members = a == donor
        if w is None or w[members].sum() == 0:
            centers[donor] = points[members].mean(axis=0)
        else:
            centers[donor] = np.average(points[members], axis=0, weights=w[members])
    return centers


def _objective(sq, w):
    return float(sq.sum() if w is None else (w * sq).sum())


def lloyd(points, centers, weights=None, max_iters: int = 100, rel_tol: float = 1e-6):
    """Run Lloyd iterations from the given initial ``centers``.

    Returns:
        ``(codebook, assignments, history)`` where ``history[i]`` is the
        (weighted) total squared error after the ``i``-th assignment step.
        ``history`` is non-increasing.
    """
    points = _as_points(points)
    centers = np.array(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != points.shape[1]:
        raise ShapeMismatch("centers and points disagree on dimension")
    if max_iters < 1 or rel_tol < 0:
        raise ValueError("max_iters must be >= 1 and rel_tol >= 0")
    w = None if weights is None else _check_weights(weights, len(points))

    a, sq = assign(points, centers)
    history = [_objective(sq, w)]
    for _ in range(max_iters):
        centers, counts = _update(points, a, centers, w)
        if np.any(counts == 0):
            centers = _repair_empty(points, a.copy(), centers, counts, w)
        a_new, sq = assign(points, centers)
        prev, cur = history[-1], _objective(sq, w)
        history.append(cur)
        changed = np.any(a_new != a)
        a = a_new
        if not changed or cur == 0.0 or (prev - cur) <= rel_tol * prev:
            break
    return centers, a, history


def kmeans(points, K: int, seed=0, max_iters: int = 100, rel_tol: float = 1e-6):
    """k-means++ seeded Lloyd clustering.

    Returns:
        ``(codebook, assignments)`` with codebook shape ``(K, d)``.
    """
    points = _as_points(points)
    rng = _as_rng(seed)
    init = kmeans_pp_init(points, K, rng)
    codebook, a, _ = lloyd(points, init, None, max_iters, rel_tol)
    return codebook, a


def weighted_kmeans(points, weights, K: int, seed=0, max_iters: int = 100, rel_tol: float = 1e-6):
    """Hessian-weighted k-means; centroids are weighted means of their members."""
    points = _as_points(points)
    w = _check_weights(weights, len(points))
    if np.all(w == w[0]):
        return kmeans(points, K, seed, max_iters, rel_tol)
    rng = _as_rng(seed)
    init = kmeans_pp_init(points, K, rng, weights=w)
    codebook, a, _ = lloyd(points, init, w, max_iters, rel_tol)
    return codebook, a


def clustering_mse(points, codebook, assignments) -> float:
    """Mean squared reconstruction error over every scalar entry."""
    points = _as_points(points)
    codebook = np.asarray(codebook, dtype=np.float64)
    assignments = np.asarray(assignments)
    if (
        codebook.ndim != 2
        or codebook.shape[1] != points.shape[1]
        or assignments.shape != (len(points),)
    ):
        raise ShapeMismatch("points, codebook and assignments are inconsistent")
    diff = points - codebook[assignments]
    return float(np.mean(diff * diff))
