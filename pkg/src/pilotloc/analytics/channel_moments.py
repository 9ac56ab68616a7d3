"""Moments of the estimated-channel inner products ĥ_kᴴh_ς and ĥ_kᴴn.

With ĥ_k = a(φ̂_k, θ̂_k) e^{jω̂l} and h_ς = η_ς (α ∘ e^{jΔδ} ∘ a_ς) e^{jω_ς l},
|ĥ_kᴴh_ς|² does not depend on any Doppler, and the products of |·|² factors
expand into sums over antenna index tuples of

    E3(offset) × E[Π g_i^{±}] × Π a_ς(i)^{±},    g_i = α_i e^{jΔδ_i},

where the defect expectation depends only on which indices coincide (a set
partition). The fourth-order sum runs over (MN)⁴ tuples. It is evaluated by
Möbius inversion on the partition lattice: every partition π gets a weight
w(π) such that the exact-pattern defect value is the sum of the weights of all
finer partitions, and the total is Σ_π w(π) S(π), where S(π) sums over tuples
whose indices agree inside each block of π. Each S(π) depends on the indices
only through the summed offset, so it is a short chain of 2-D convolutions
against the E3 table, never an explicit tuple loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from ..scene import ArrayConfig, GainPhaseModel, steering_matrix
from ..specfun import DEFAULT_POLICY, SeriesPolicy, rician_moment, vonmises_char
from .angle_expectation import AngleErrorModel, e3_table

__all__ = [
    "DefectMoments",
    "defect_moments",
    "partitions",
    "channel_moment_2",
    "channel_moment_4",
    "noise_moments",
    "product_moment",
]


@dataclass(frozen=True)
class DefectMoments:
    """E[α^c] for c = 0..4 and E[e^{jsΔδ}] for s = −2..2 (index s + 2)."""

    gain: tuple
    phase: tuple

    def block(self, size: int, sign_sum: int) -> complex:
        return self.gain[size] * self.phase[sign_sum + 2]


@lru_cache(maxsize=64)
def defect_moments(model: GainPhaseModel, policy: SeriesPolicy = DEFAULT_POLICY) -> DefectMoments:
    if model.is_ideal:
        return DefectMoments((1.0,) * 5, (1.0 + 0j,) * 5)
    gain = tuple(rician_moment(c, model.rician_location, model.rician_scale, policy)
                 for c in range(5))
    phase = []
    for s in range(-2, 3):
        phase.append(vonmises_char(abs(s), 1 if s >= 0 else -1, model.vonmises_mean,
                                   model.vonmises_concentration, policy=policy))
    return DefectMoments(gain, tuple(phase))


def partitions(n: int):
    """All set partitions of range(n) as tuples of blocks (restricted-growth order)."""
    def grow(i, labels):
        if i == n:
            k = max(labels) + 1
            yield tuple(tuple(j for j in range(n) if labels[j] == b) for b in range(k))
            return
        for b in range(max(labels, default=-1) + 2):
            yield from grow(i + 1, labels + [b])
    return list(grow(0, []))


def _finer(p, q) -> bool:
    """True when every block of p lies inside a block of q."""
    lookup = {i: bi for bi, blk in enumerate(q) for i in blk}
    return all(len({lookup[i] for i in blk}) == 1 for blk in p)


def _defect_value(part, signs, dm: DefectMoments) -> complex:
    v = 1.0 + 0j
    for blk in part:
        v *= dm.block(len(blk), sum(signs[i] for i in blk))
    return v


@lru_cache(maxsize=32)
def _mobius_weights(signs: tuple, dm: DefectMoments):
    """Weights w(π) with D(τ) = Σ_{π finer than τ} w(π) for every partition τ."""
    parts = sorted(partitions(len(signs)), key=len, reverse=True)     # finest first
    weights = []
    for tau in parts:
        below = sum(w for pi, w in zip(parts, weights) if pi != tau and _finer(pi, tau))
        weights.append(_defect_value(tau, signs, dm) - below)
    return list(zip(parts, weights))


def product_moment(weights_vecs, signs, e3, dm: DefectMoments, array: ArrayConfig,
                   max_m: int, max_n: int) -> complex:
    """E[Σ_{i1..in} E3-phase · Π g^{±} · Π v] for one sign pattern.

    ``weights_vecs[i]`` is the (conjugation-applied) truth steering factor for
    position i. Positions with +1 carry g_i, positions with −1 carry g_i*.
    """
    total = 0.0 + 0j
    for part, w in _mobius_weights(tuple(signs), dm):
        if w == 0:
            continue
        # merge positions in each block: the product vector and the block's net sign
        merged, msigns = [], []
        for blk in part:
            v = np.ones(array.size, dtype=complex)
            for i in blk:
                v = v * weights_vecs[i]
            merged.append(v)
            msigns.append(sum(signs[i] for i in blk))
        total += w * _merged_sum(merged, msigns, e3, array, max_m, max_n)
    return total


def _merged_sum(vectors, signs, e3, array, max_m, max_n) -> complex:
    # blocks with net sign 0 contribute no offset: factor them out
    scalar = 1.0 + 0j
    vs, ss = [], []
    for v, s in zip(vectors, signs):
        if s == 0:
            scalar *= v.sum()
        else:
            vs.append(v)
            ss.append(s)
    if not vs:
        return scalar * e3[max_m, max_n]
    # a block with net sign ±c moves the offset by c times its index
    expanded_v, expanded_s = [], []
    for v, s in zip(vs, ss):
        c = abs(s)
        grid = v.reshape(array.m_count, array.n_count)
        up = np.zeros((c * (array.m_count - 1) + 1, c * (array.n_count - 1) + 1), dtype=complex)
        up[::c, ::c] = grid
        expanded_v.append(up)
        expanded_s.append(1 if s > 0 else -1)
    return scalar * _offset_sum_general(expanded_v, expanded_s, e3, array, max_m, max_n)


def _offset_sum_general(vectors, signs, e3, array, max_m, max_n) -> complex:
    acc, lo_m, lo_n = None, 0, 0
    for v, s in zip(vectors, signs):
        grid = v
        if s < 0:
            lo_m -= grid.shape[0] - 1
            lo_n -= grid.shape[1] - 1
            grid = grid[::-1, ::-1]
        acc = grid if acc is None else signal.convolve(acc, grid, method="direct")
    mm = np.arange(acc.shape[0]) + lo_m + max_m
    nn = np.arange(acc.shape[1]) + lo_n + max_n
    return complex(np.sum(acc * e3[np.ix_(mm, nn)]))


def _truth_vectors(array: ArrayConfig, truth_az, truth_el):
    return steering_matrix(array, np.atleast_1d(truth_az), np.atleast_1d(truth_el))


def _table(errors: AngleErrorModel, array: ArrayConfig, order: int, policy, method):
    return e3_table(errors, array, order * (array.m_count - 1), order * (array.n_count - 1),
                    policy=policy, method=method)


def channel_moment_2(array: ArrayConfig, errors: AngleErrorModel, target_az: float,
                     target_el: float, path_loss: float, error: GainPhaseModel,
                     policy: SeriesPolicy = DEFAULT_POLICY, method: str = "series",
                     e3=None) -> float:
    """E[|ĥ_kᴴ h_ς|²] where ĥ_k is built from drone k's noisy angles (``errors``).

    Expanding gives Σ_{i1,i2} E3(i1 − i2) E[g_{i1} g*_{i2}] a_ς(i1) a_ς*(i2) η_ς².
    """
    if e3 is None:
        e3 = _table(errors, array, 2, policy, method)
    max_m, max_n = (e3.shape[0] - 1) // 2, (e3.shape[1] - 1) // 2
    a = _truth_vectors(array, target_az, target_el)[:, 0]
    dm = defect_moments(error, policy)
    val = product_moment([a, a.conj()], (1, -1), e3, dm, array, max_m, max_n)
    return float(path_loss ** 2 * val.real)


def channel_moment_4(array: ArrayConfig, errors: AngleErrorModel, first, second,
                     error: GainPhaseModel, policy: SeriesPolicy = DEFAULT_POLICY,
                     method: str = "series", e3=None) -> float:
    """E[|ĥ_kᴴ h_ς|² |ĥ_kᴴ h_ϱ|²] for target drones ``first`` and ``second``.

    Each target is (azimuth, elevation, path_loss). With first == second this
    is E[|ĥ_kᴴ h_ς|⁴].
    """
    if e3 is None:
        e3 = _table(errors, array, 2, policy, method)
    max_m, max_n = (e3.shape[0] - 1) // 2, (e3.shape[1] - 1) // 2
    a1 = _truth_vectors(array, first[0], first[1])[:, 0]
    a2 = _truth_vectors(array, second[0], second[1])[:, 0]
    dm = defect_moments(error, policy)
    val = product_moment([a1, a1.conj(), a2, a2.conj()], (1, -1, 1, -1), e3, dm, array,
                         max_m, max_n)
    return float(first[2] ** 2 * second[2] ** 2 * val.real)


def noise_moments(array: ArrayConfig, noise_variance: float, channel_second: float | None = None):
    """(E|ĥᴴn|², E|ĥᴴn|⁴, E[|ĥᴴh_ς|²|ĥᴴn|²]) for unit-modulus ĥ.

    Given ĥ, ĥᴴn is CN(0, MNσ²) whatever the angle errors, so the second and
    fourth moments are MNσ² and 2(MNσ²)². The mixed term factorises because n
    is independent of every other variable; it is None without
    ``channel_second`` = E|ĥᴴh_ς|².
    """
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    p = array.size * noise_variance
    mixed = None if channel_second is None else p * channel_second
    return p, 2.0 * p * p, mixed
