"""Nearest-neighbour differential entropy estimate (Kozachenko-Leonenko).

Used as a diagnostic for how spread out a set of samples (for example the
states visited in a batch) is. Not part of the training objective.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

_DIST_FLOOR = 1e-12


def unit_ball_log_volume(m: int) -> float:
    """log of the volume of the Euclidean unit ball in ``m`` dimensions."""
    return 0.5 * m * np.log(np.pi) - gammaln(0.5 * m + 1.0)


def knn_entropy(samples, k: int = 3) -> float:
    """Differential entropy in nats of the distribution behind ``samples``.

    ``samples`` is ``(N,)`` or ``(N, m)``. Uses

        H = psi(N) - psi(k) + log V_m + (m / N) * sum_i log eps_i

    where ``eps_i`` is the distance from sample ``i`` to its k-th neighbour.
    Duplicate points are floored at a tiny distance instead of giving -inf.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("samples must be (N,) or (N, m)")
    n, m = x.shape
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < N, got k={k}, N={n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite samples")
    # k + 1 because each point is its own nearest neighbour
    dist, _ = cKDTree(x).query(x, k=k + 1)
    eps = np.maximum(dist[:, -1], _DIST_FLOOR)
    return float(digamma(n) - digamma(k) + unit_ball_log_volume(m) + m * np.mean(np.log(eps)))
