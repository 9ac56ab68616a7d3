from __future__ import annotations

import itertools

import numpy as np

from .params import ParamVector

__all__ = ["match_to_truth"]


def match_to_truth(estimates: ParamVector, truth: ParamVector) -> tuple[int, ...]:
    """Permutation ``perm`` such that ``estimates.permuted(perm)`` lines up with ``truth``.

    Minimises the total angular distance Σ_k √(Δφ² + Δθ²) by exhaustive search;
    ties keep the lexicographically first permutation.
    """
    if estimates.k != truth.k:
        raise ValueError("estimate and truth need the same number of drones")
    k = truth.k
    if k > 8:
        raise ValueError("exhaustive matching is limited to K <= 8")
    d = np.hypot(estimates.azimuths[:, None] - truth.azimuths[None, :],
                 estimates.elevations[:, None] - truth.elevations[None, :])
    best, best_cost = tuple(range(k)), np.inf
    for perm in itertools.permutations(range(k)):
        cost = sum(d[perm[j], j] for j in range(k))
        if cost < best_cost - 1e-15:
            best, best_cost = perm, cost
    return best
