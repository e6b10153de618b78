"""Positive-definite kernels, Gram matrices, and median-heuristic bandwidths.

Two stationary families are supported:

* ``gaussian``:  k(a, b) = exp(-||a - b||_2^2 / (2 sigma^2))
* ``laplacian``: k(a, b) = exp(-||a - b||_1 / sigma)

Both are bounded by 1, symmetric, and equal 1 on the diagonal. Bandwidths
are typically chosen by :func:`median_heuristic`, the median of all pairwise
inter-point distances (Euclidean for gaussian, L1 for laplacian).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"
FAMILIES = (GAUSSIAN, LAPLACIAN)

# Pairwise-distance pools larger than this are subsampled (seeded, so the
# result is deterministic) before taking the median; keeps the heuristic
# O(cap^2) on big inputs.
MEDIAN_HEURISTIC_CAP = 1000
_MEDIAN_HEURISTIC_SEED = 761803


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family together with its bandwidth sigma (> 0, finite)."""

    family: str
    bandwidth: float

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")


def _as_matrix(arr, name: str) -> np.ndarray:
    out = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if out.ndim != 2:
        raise ValueError(f"{name} must be at most 2-dimensional, got shape {np.shape(arr)}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def eval_kernel(spec: KernelSpec, a, b) -> float:
    """Evaluate k(a, b) for two vectors of equal dimension."""
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise ValueError(f"dimension mismatch: a has {av.shape[0]}, b has {bv.shape[0]}")
    if not (np.all(np.isfinite(av)) and np.all(np.isfinite(bv))):
        raise ValueError("kernel inputs must be finite")
    if spec.family == GAUSSIAN:
        d2 = float(np.sum((av - bv) ** 2))
        return float(np.exp(-d2 / (2.0 * spec.bandwidth**2)))
    d1 = float(np.sum(np.abs(av - bv)))
    return float(np.exp(-d1 / spec.bandwidth))


def gram_matrix(spec: KernelSpec, a, b) -> np.ndarray:
    """Kernel matrix with entry (i, j) = k(A_i, B_j) for row sets A (p x d), B (q x d)."""
    am = _as_matrix(a, "a")
    bm = _as_matrix(b, "b")
    if am.shape[1] != bm.shape[1]:
        raise ValueError(f"dimension mismatch: a has {am.shape[1]} columns, b has {bm.shape[1]}")
    if spec.family == GAUSSIAN:
        d2 = cdist(am, bm, metric="sqeuclidean")
        return np.exp(-d2 / (2.0 * spec.bandwidth**2))
    d1 = cdist(am, bm, metric="cityblock")
    return np.exp(-d1 / spec.bandwidth)


def median_heuristic(points, family: str) -> float:
    """Median pairwise distance of a point set, in the metric of `family`.

    Euclidean distances for the gaussian family, L1 for laplacian. Pools of
    more than MEDIAN_HEURISTIC_CAP points are subsampled (fixed seed) before
    the O(p^2) distance enumeration. Ties resolve to the lower median of the
    sorted distance list; zero distances stay in the pool.

    Raises ValueError when the median distance is zero (degenerate sample).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")
    pts = _as_matrix(points, "points")
    p = pts.shape[0]
    if p < 2:
        raise ValueError("median heuristic needs at least two points")
    if p > MEDIAN_HEURISTIC_CAP:
        rng = np.random.default_rng(_MEDIAN_HEURISTIC_SEED)
        idx = rng.choice(p, size=MEDIAN_HEURISTIC_CAP, replace=False)
        pts = pts[np.sort(idx)]
    metric = "euclidean" if family == GAUSSIAN else "cityblock"
    dists = np.sort(pdist(pts, metric=metric))
    med = float(dists[(dists.size - 1) // 2])  # lower median
    if med <= 0.0:
        raise ValueError("degenerate sample, zero bandwidth")
    return med
