"""Nonparametric state-visitation entropy of a trajectory.

Kozachenko-Leonenko k-nearest-neighbor estimator over the visited states,
one estimate per trajectory.  Neighbor search is exact (chunked pairwise
distances); point clouds here are a few hundred points, and the estimator
stays usable up to tens of thousands.
"""

from dataclasses import dataclass
from math import lgamma, log, pi

import numpy as np
from scipy.special import digamma

from .errors import InputError

DEFAULT_K = 4
_EPS = 1e-12
_CHUNK = 512


@dataclass(frozen=True)
class EntropyEstimate:
    """Entropy value in nats plus the estimator inputs that produced it."""

    value: float
    k: int
    n: int


def _unit_ball_log_volume(d: int) -> float:
    # V_d = pi^(d/2) / Gamma(d/2 + 1)
    return 0.5 * d * log(pi) - lgamma(0.5 * d + 1.0)


def _kth_neighbor_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Euclidean distance from each point to its k-th nearest other point.

    Squared distances come from coordinate differences (not the norm
    expansion), so they depend only on pairwise offsets.
    """
    n = len(points)
    radii = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = points[start:stop, None, :] - points[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        # Each row contains its own zero self-distance, so the k-th other
        # neighbor is the element of rank k (0-based) in the full row.
        radii[start:stop] = np.sqrt(np.partition(d2, k, axis=1)[:, k])
    return radii


def knn_entropy(states: np.ndarray, k: int = DEFAULT_K) -> EntropyEstimate:
    """Kozachenko-Leonenko entropy of a point cloud, in nats.

    H = (d/n) * sum_i log(R_i + eps) + log V_d + log(n-1) - psi(k), where
    R_i is the distance from point i to its k-th nearest other point and
    V_d the unit d-ball volume.  The eps floor keeps duplicate-only clouds
    finite instead of NaN.  Depends only on pairwise distances, so the
    value is exactly translation invariant, and scaling all points by c
    shifts it by d*log(c).
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2:
        raise InputError(f"states must be an (n, d) array, got shape {states.shape}")
    n, d = states.shape
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    if n <= k:
        raise InputError(f"need more than k={k} points, got n={n}")
    radii = _kth_neighbor_distances(states, k)
    # Summing in sorted order makes the estimate independent of the input
    # point order, bit for bit.
    radii.sort()
    value = (
        d * np.log(radii + _EPS).mean()
        + _unit_ball_log_volume(d)
        + log(n - 1)
        - float(digamma(k))
    )
    return EntropyEstimate(value=float(value), k=k, n=n)


def batch_entropies(batch, k: int = DEFAULT_K) -> np.ndarray:
    """Per-trajectory entropies, order preserved."""
    return np.array([knn_entropy(traj.states, k).value for traj in batch])
