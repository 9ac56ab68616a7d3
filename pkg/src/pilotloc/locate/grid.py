"""Search grids and a coarse-to-fine maximiser over (azimuth, elevation, Doppler)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from ..scene import ArrayConfig, steering_matrix

__all__ = ["GridSpec", "SearchResult", "grid_maximize", "axis_values", "steering_grid"]


@dataclass(frozen=True)
class GridSpec:
    """Exhaustive-search grid; angles in degrees, Doppler in Hz.

    Level 0 is the full coarse grid. Each refinement level r re-grids a window of
    ± (previous step) around the current best with step × refine_shrink, so the
    window width shrinks by ``refine_shrink`` per level.
    """

    azimuth_range: tuple[float, float] = (1.0, 89.0)
    azimuth_step: float = 1.0
    elevation_range: tuple[float, float] = (1.0, 89.0)
    elevation_step: float = 1.0
    doppler_range: tuple[float, float] = (0.0, 10_000.0)
    doppler_step: float = 100.0
    refine_levels: int = 3
    refine_shrink: float = 0.2

    def __post_init__(self):
        for name in ("azimuth", "elevation", "doppler"):
            lo, hi = getattr(self, f"{name}_range")
            step = getattr(self, f"{name}_step")
            if not step > 0:
                raise ValueError(f"{name}_step must be positive")
            if not hi >= lo:
                raise ValueError(f"{name}_range must be non-empty")
        for name in ("azimuth", "elevation"):
            lo, hi = getattr(self, f"{name}_range")
            if not (0.0 < lo and hi < 90.0):
                raise ValueError(f"{name}_range must lie inside (0, 90) degrees")
        if self.refine_levels < 0:
            raise ValueError("refine_levels must be >= 0")
        if not 0 < self.refine_shrink < 1:
            raise ValueError("refine_shrink must lie in (0, 1)")

    def coarse(self) -> "GridSpec":
        return replace(self, refine_levels=0)

    def decimated(self, max_angle_points: int = 12, max_doppler_points: int = 5) -> "GridSpec":
        """Coarser copy with at most the given number of points per axis."""
        def step_for(rng, step, n_max):
            span = rng[1] - rng[0]
            n = int(math.floor(span / step)) + 1
            return step * max(1, math.ceil(n / n_max)) if n > n_max else step
        return replace(
            self,
            azimuth_step=step_for(self.azimuth_range, self.azimuth_step, max_angle_points),
            elevation_step=step_for(self.elevation_range, self.elevation_step, max_angle_points),
            doppler_step=step_for(self.doppler_range, self.doppler_step, max_doppler_points),
            refine_levels=0,
        )

    def axis(self, name: str) -> tuple[float, float, float]:
        lo, hi = getattr(self, f"{name}_range")
        return lo, hi, getattr(self, f"{name}_step")


def axis_values(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


@lru_cache(maxsize=32)
def _cached_steering(array: ArrayConfig, az_key: bytes, el_key: bytes) -> np.ndarray:
    az = np.frombuffer(az_key)
    el = np.frombuffer(el_key)
    a_mesh, e_mesh = np.meshgrid(az, el, indexing="ij")
    a = steering_matrix(array, a_mesh.ravel(), e_mesh.ravel())
    a.setflags(write=False)
    return a


def steering_grid(array: ArrayConfig, az_rad: np.ndarray, el_rad: np.ndarray, cache=True) -> np.ndarray:
    """Steering vectors over the az × el product grid (MN x Na·Ne, az-major)."""
    az = np.ascontiguousarray(az_rad, dtype=float)
    el = np.ascontiguousarray(el_rad, dtype=float)
    if cache:
        return _cached_steering(array, az.tobytes(), el.tobytes())
    a_mesh, e_mesh = np.meshgrid(az, el, indexing="ij")
    return steering_matrix(array, a_mesh.ravel(), e_mesh.ravel())


@dataclass
class SearchResult:
    point: tuple[float, float, float]    # (az_deg, el_deg, doppler_hz)
    score: float
    on_boundary: bool
    evaluations: int


def grid_maximize(score_fn, grid: GridSpec, fixed=(None, None, None), levels=None,
                  start=None) -> SearchResult:
    """Maximise ``score_fn`` over the grid, then refine around the best point.

    ``score_fn(az_deg, el_deg, fd_hz)`` receives three 1-D axes and returns an
    array of shape (Na, Ne, Nf). Any entry of ``fixed`` pins that axis to a
    single value. Ties go to the lowest (az, el, fd) lexicographic index, which
    is what ``np.argmax`` on the C-ordered array yields. With ``start`` the
    coarse pass is skipped and refinement begins at that point.
    """
    specs = [grid.axis(n) for n in ("azimuth", "elevation", "doppler")]
    if start is None:
        axes = [np.array([float(f)]) if f is not None else axis_values(*s)
                for f, s in zip(fixed, specs)]
        scores = np.asarray(score_fn(*axes))
        idx = np.unravel_index(int(np.argmax(scores)), scores.shape)
        best = [float(ax[i]) for ax, i in zip(axes, idx)]
        best_score = float(scores[idx])
        evals = scores.size
        boundary = any(f is None and ax.size > 1 and i in (0, ax.size - 1)
                       for f, ax, i in zip(fixed, axes, idx))
    else:
        best = [float(f) if f is not None else float(s0) for f, s0 in zip(fixed, start)]
        best_score = float(np.asarray(score_fn(*[np.array([b]) for b in best])).ravel()[0])
        evals, boundary = 1, False
    n_half = int(round(1.0 / grid.refine_shrink))
    steps = [s[2] for s in specs]
    n_levels = grid.refine_levels if levels is None else levels
    for _ in range(n_levels):
        new_steps = [st * grid.refine_shrink for st in steps]
        axes = []
        for dim, f in enumerate(fixed):
            if f is not None:
                axes.append(np.array([float(f)]))
                continue
            lo, hi, _ = specs[dim]
            ax = best[dim] + new_steps[dim] * np.arange(-n_half, n_half + 1)
            ax = ax[(ax >= lo - 1e-9) & (ax <= hi + 1e-9)]
            axes.append(ax)
        steps = new_steps
        scores = np.asarray(score_fn(*axes))
        evals += scores.size
        idx = np.unravel_index(int(np.argmax(scores)), scores.shape)
        if scores[idx] > best_score:
            best = [float(ax[i]) for ax, i in zip(axes, idx)]
            best_score = float(scores[idx])
    return SearchResult(tuple(best), best_score, boundary, evals)
