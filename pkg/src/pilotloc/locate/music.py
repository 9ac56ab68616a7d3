"""MUSIC angle estimation on the rectangular array, plus a Doppler ML step for DLDD use."""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..scene import ArrayConfig
from .grid import GridSpec, axis_values, grid_maximize, steering_grid
from .mle import correlation_score, _residual
from .moments import PilotModel, _as_matrix
from .params import ParamVector

__all__ = ["RankDeficiencyError", "music_spectrum", "music_estimate", "music_doppler_estimate",
           "sample_covariance"]


class RankDeficiencyError(RuntimeError):
    """Fewer distinguishable spectrum peaks than requested sources."""


def sample_covariance(snapshots: np.ndarray, k_sources: int) -> np.ndarray:
    """R = (1/S) Σ y yᴴ, diagonally loaded by 1e-6·tr(R)/MN when S ≤ K."""
    y = np.asarray(snapshots)
    mn, s = y.shape
    r = (y @ y.conj().T) / s
    if s <= k_sources:
        r = r + (1e-6 * np.trace(r).real / mn) * np.eye(mn)
    return r


def _signal_subspace(snapshots, k_sources):
    r = sample_covariance(snapshots, k_sources)
    _, vecs = np.linalg.eigh(r)            # ascending eigenvalues
    return vecs[:, -k_sources:]


def music_spectrum(array: ArrayConfig, signal_subspace: np.ndarray):
    """Score function (az_deg, el_deg, fd ignored) returning 1/(aᴴU_nU_nᴴa).

    Uses aᴴU_nU_nᴴa = ‖a‖² − ‖U_sᴴa‖², valid because the eigenvectors of the
    Hermitian covariance form an orthonormal basis.
    """
    mn = array.size
    floor = 1e-14 * mn

    def score(az, el, fd=np.zeros(1)):
        a = steering_grid(array, np.radians(az), np.radians(el), cache=az.size * el.size > 400)
        proj = np.sum(np.abs(signal_subspace.conj().T @ a) ** 2, axis=0)
        p = 1.0 / np.maximum(mn - proj, floor)
        return np.broadcast_to(p.reshape(az.size, el.size, 1), (az.size, el.size, fd.size))

    return score


def _local_peaks(p: np.ndarray):
    """Indices of 2-D local maxima (≥ both neighbours along each axis)."""
    pad = np.pad(p, 1, mode="constant", constant_values=-np.inf)
    c = pad[1:-1, 1:-1]
    mask = ((c >= pad[:-2, 1:-1]) & (c >= pad[2:, 1:-1])
            & (c >= pad[1:-1, :-2]) & (c >= pad[1:-1, 2:]))
    ii, jj = np.nonzero(mask)
    order = np.lexsort((jj, ii, -p[ii, jj]))   # value desc, then lexicographic
    return ii[order], jj[order]


def music_estimate(snapshots: np.ndarray, k_sources: int, grid: GridSpec | None = None,
                   array: ArrayConfig | None = None):
    """(azimuths, elevations) in radians of the K largest MUSIC peaks.

    Peaks are found on the coarse angle grid, then each is refined with the
    grid's coarse-to-fine levels on the continuous spectrum. A refined peak
    within one coarse step of an accepted one is skipped.
    """
    grid = grid or GridSpec()
    y = np.asarray(snapshots)
    if array is None or array.size != y.shape[0]:
        raise ValueError("array must match the snapshot dimension")
    if k_sources < 1 or k_sources > array.size - 1:
        raise ValueError("k_sources must lie in [1, MN-1]")
    u_s = _signal_subspace(y, k_sources)
    score = music_spectrum(array, u_s)
    az = axis_values(*grid.axis("azimuth"))
    el = axis_values(*grid.axis("elevation"))
    p = score(az, el)[:, :, 0]
    ii, jj = _local_peaks(p)
    if ii.size < k_sources:
        raise RankDeficiencyError(f"found {ii.size} spectrum peaks, need {k_sources}")
    # two coarse peaks may refine onto the same maximum; keep the next peak instead
    a_step, e_step = grid.axis("azimuth")[2], grid.axis("elevation")[2]
    out = []
    for i, j in zip(ii, jj):
        res = grid_maximize(score, grid, fixed=(None, None, 0.0), start=(az[i], el[j], 0.0))
        pa, pe = res.point[0], res.point[1]
        if any(abs(pa - qa) < a_step and abs(pe - qe) < e_step for qa, qe in out):
            continue
        out.append((pa, pe))
        if len(out) == k_sources:
            break
    if len(out) < k_sources:
        raise RankDeficiencyError(f"found {len(out)} distinct spectrum peaks, need {k_sources}")
    return np.radians([p[0] for p in out]), np.radians([p[1] for p in out])


def _doppler_fit(model: PilotModel, y, params: ParamVector, grid: GridSpec, sweeps: int = 3):
    for _ in range(sweeps):
        changed = False
        for k in range(params.k):
            az, el, fd = params.drone(k)
            score = correlation_score(model, _residual(model, y, params, k), model.gains[k])
            res = grid_maximize(score, grid, fixed=(math.degrees(az), math.degrees(el), None))
            if res.point[2] != fd:
                params = params.with_drone(k, fd=res.point[2])
                changed = True
        if not changed:
            break
    return params


def music_doppler_estimate(observations, model: PilotModel, grid: GridSpec | None = None) -> ParamVector:
    """MUSIC angles from the pilot snapshots, then grid-ML Doppler per drone.

    MUSIC peaks carry no drone labels; with unequal template gains the labelling
    matters, so every assignment of peaks to drones is tried and the one with
    the smallest ‖ȳ − μ‖² kept.
    """
    grid = grid or GridSpec()
    y = _as_matrix(observations, model)
    az, el = music_estimate(y, model.k, grid, model.array)
    best, best_val = None, math.inf
    for perm in itertools.permutations(range(model.k)):
        perm = list(perm)
        start = ParamVector(az[perm], el[perm], np.zeros(model.k))
        cand = _doppler_fit(model, y, start, grid)
        val = model.objective(y, cand)
        if val < best_val:
            best, best_val = cand, val
    best.info.update(objective=best_val)
    return best
