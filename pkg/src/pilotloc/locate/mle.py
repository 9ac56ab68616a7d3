"""Grid maximum-likelihood localisation from stacked pilots.

For a single drone with template g·a(φ,θ)e^{j2πf l/f_s}, every candidate has the
same template energy |g|²·MN·L, so minimising ‖Y − template‖² is the same as
maximising Re(g* Σ_{i,l} a_i* e^{-j2πf l/f_s} Y_{il}). That correlation is
evaluated for the whole grid with two matrix products (steering grid ᴴ Y, then
a Doppler phase matrix).

Several drones are handled by block-coordinate descent: a joint exhaustive pass
over a decimated grid (K = 2) or successive single-drone fits (K ≥ 3) gives
the starting point, then each drone is re-fitted on the residual of the others
until a full cycle changes nothing.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..scene import steering_matrix
from .grid import GridSpec, SearchResult, axis_values, grid_maximize, steering_grid
from .moments import PilotModel, _as_matrix
from .params import ParamVector

__all__ = ["mle_estimate", "correlation_score", "fit_single_drone"]


def correlation_score(model: PilotModel, residual: np.ndarray, gain: complex):
    """Score function over (az_deg, el_deg, fd_hz) axes for one drone template."""
    ls = model.subframe_index.astype(float)
    fs = model.frame.sampling_hz
    g_conj = np.conj(gain)

    def score(az, el, fd):
        a = steering_grid(model.array, np.radians(az), np.radians(el),
                          cache=az.size * el.size > 400)
        z = a.conj().T @ residual
        d = np.exp(-2j * np.pi * np.outer(ls, fd) / fs)
        return (g_conj * (z @ d)).real.reshape(az.size, el.size, fd.size)

    return score


def _weighted_score(model: PilotModel, observations, params: ParamVector, k: int,
                    chunk_elems: int = 4_000_000):
    """−(weighted objective) over a grid of candidates for drone k, others held.

    Vectorised ``PilotModel.weighted_objective``. Per antenna i the response is
    q_i = o_i + a_i d with o_i the other drones' response and d_l = η_k√P_k e^{jωl}.
    Every term of the Sherman–Morrison form reduces to inner products over l
    that are tabulated once per Doppler value (P = o dᴴ, Y = (y − c·o) dᴴ), so a
    candidate costs O(MN) instead of O(MN·L).
    """
    s2 = model.noise_variance
    if not s2 > 0:
        raise ValueError("weighted objective needs a positive noise variance")
    y = np.asarray(observations)
    c = complex(model.defects.coherent)
    v = model.defects.excess
    amps = np.asarray(model.amplitudes)
    ls = model.subframe_index
    n_l = ls.size
    mn = model.array.size
    others = [p for p in range(params.k) if p != k]
    o = np.zeros_like(y)
    if others:
        a_o = steering_matrix(model.array, params.azimuths[others], params.elevations[others])
        o = a_o @ (amps[others, None] * model.frame.doppler_phase(params.dopplers[others], ls))
    y0 = y - c * o
    o_energy = np.sum(np.abs(o) ** 2, axis=1)                    # MN
    o_y0 = np.sum(o.conj() * y0, axis=1)                          # MN
    y0_energy = float(np.sum(np.abs(y0) ** 2))
    d_energy = n_l * amps[k] ** 2                                 # Σ_l |d_l|²
    const = y.size * math.log(s2)

    def score(az, el, fd):
        dc = np.conj(amps[k] * model.frame.doppler_phase(fd, ls))  # Nf x L, conj(d)
        p_t = (o @ dc.T).T                                         # Nf x MN
        y_t = (y0 @ dc.T).T
        out = np.empty((az.size, el.size, fd.size))
        per_az = el.size * fd.size * mn
        step = max(1, chunk_elems // max(per_az, 1))
        for i0 in range(0, az.size, step):
            a = steering_grid(model.array, np.radians(az[i0:i0 + step]), np.radians(el), cache=False)
            ac = a.conj().T[:, None, :]                            # n x 1 x MN
            at = a.T[:, None, :]
            qn = o_energy + d_energy + 2.0 * (ac * p_t[None]).real
            qr = o_y0 - c * at * p_t.conj()[None] + ac * y_t[None] - c * d_energy
            rr = y0_energy + abs(c) ** 2 * mn * d_energy - 2.0 * np.sum((np.conj(c) * ac * y_t[None]).real, axis=-1)
            quad = (rr - np.sum(v * np.abs(qr) ** 2 / (s2 + v * qn), axis=-1)) / s2
            logdet = np.sum(np.log1p(v * qn / s2), axis=-1)
            n_az = a.shape[1] // el.size
            out[i0:i0 + n_az] = -(quad + logdet + const).reshape(n_az, el.size, fd.size)
        return out

    return score


def _gls_score(model: PilotModel, observations, params: ParamVector, k: int, anchor: ParamVector,
               chunk_elems: int = 4_000_000):
    """−(GLS objective) over a grid of candidates for drone k, Γ frozen at ``anchor``.

    Vectorised ``PilotModel.gls_objective``. With r_i = y0_i − c a_i d and the
    anchor response q̂_i, the weighted term needs q̂_iᴴ y0_i (fixed) and
    q̂_iᴴ d (one table per Doppler value).
    """
    s2 = model.noise_variance
    if not s2 > 0:
        raise ValueError("GLS objective needs a positive noise variance")
    y = np.asarray(observations)
    c = complex(model.defects.coherent)
    v = model.defects.excess
    amps = np.asarray(model.amplitudes)
    ls = model.subframe_index
    mn = model.array.size
    others = [p for p in range(params.k) if p != k]
    o = np.zeros_like(y)
    if others:
        a_o = steering_matrix(model.array, params.azimuths[others], params.elevations[others])
        o = a_o @ (amps[others, None] * model.frame.doppler_phase(params.dopplers[others], ls))
    y0 = y - c * o
    qa = model.response(anchor)
    w = v / (s2 + v * np.sum(np.abs(qa) ** 2, axis=1))            # MN
    g = np.sum(qa.conj() * y0, axis=1)                             # MN
    y0_energy = float(np.sum(np.abs(y0) ** 2))
    d_energy = ls.size * amps[k] ** 2

    def score(az, el, fd):
        d = amps[k] * model.frame.doppler_phase(fd, ls)            # Nf x L
        y_t = (y0 @ d.conj().T).T                                   # Nf x MN
        h = (qa.conj() @ d.T).T                                     # Nf x MN, q̂ᴴd
        out = np.empty((az.size, el.size, fd.size))
        per_az = el.size * fd.size * mn
        step = max(1, chunk_elems // max(per_az, 1))
        for i0 in range(0, az.size, step):
            a = steering_grid(model.array, np.radians(az[i0:i0 + step]), np.radians(el), cache=False)
            ac = a.conj().T[:, None, :]
            at = a.T[:, None, :]
            rr = y0_energy + abs(c) ** 2 * mn * d_energy - 2.0 * np.sum((np.conj(c) * ac * y_t[None]).real, axis=-1)
            cross = np.sum(w * np.abs(g - c * at * h[None]) ** 2, axis=-1)
            n_az = a.shape[1] // el.size
            out[i0:i0 + n_az] = -((rr - cross) / s2).reshape(n_az, el.size, fd.size)
        return out

    return score


def _residual(model: PilotModel, y: np.ndarray, params: ParamVector, skip: int) -> np.ndarray:
    r = y.copy()
    for p in range(params.k):
        if p != skip:
            r -= model.drone_template(params, p)
    return r


@lru_cache(maxsize=16)
def _doppler_tables(grid: GridSpec, first: int, n_pilots: int, fs: float):
    """Coarse Doppler axis, its phase matrix and the per-level offset phase matrices."""
    ls = np.arange(first, first + n_pilots, dtype=float)
    lo, hi, step = grid.axis("doppler")
    fd = axis_values(lo, hi, step)
    coarse = np.exp(-2j * np.pi * np.outer(ls, fd) / fs)
    n_half = int(round(1.0 / grid.refine_shrink))
    offs = np.arange(-n_half, n_half + 1)
    levels = []
    for _ in range(grid.refine_levels):
        step *= grid.refine_shrink
        levels.append((step * offs, np.exp(-2j * np.pi * np.outer(ls, step * offs) / fs)))
    return ls, fd, coarse, levels


def _doppler_profile(model: PilotModel, z: np.ndarray, gain: complex, grid: GridSpec):
    """Best Doppler (and its score) for every row of z = Aᴴ R, by coarse-to-fine search per row."""
    fs = model.frame.sampling_hz
    ls, fd, coarse, levels = _doppler_tables(grid, model.first_subframe, model.pilots, fs)
    lo, hi, _ = grid.axis("doppler")
    g_conj = np.conj(gain)
    s = (g_conj * (z @ coarse)).real
    col = np.argmax(s, axis=1)
    rows = np.arange(z.shape[0])
    best_f = fd[col]
    best_s = s[rows, col]
    for delta, phase in levels:
        cand = best_f[:, None] + delta[None, :]
        # e^{-jω_cand l} factors into a per-row part and a shared offset part
        w = z * np.exp(-2j * np.pi * np.outer(best_f, ls) / fs)
        sc = (g_conj * (w @ phase)).real
        sc[(cand < lo - 1e-9) | (cand > hi + 1e-9)] = -np.inf
        c = np.argmax(sc, axis=1)
        better = sc[rows, c] > best_s
        best_f = np.where(better, cand[rows, c], best_f)
        best_s = np.where(better, sc[rows, c], best_s)
    return best_f, best_s


def profile_search(model: PilotModel, residual: np.ndarray, gain: complex, grid: GridSpec,
                   start=None, local_steps: int = 2) -> SearchResult:
    """Joint (az, el, f_D) search for one drone on ``residual``.

    Level 0 is the exhaustive product grid. Refinement then re-grids the angles
    around the incumbent and, for every candidate angle, re-optimises the
    Doppler over its whole range (profile likelihood). Angle and Doppler errors
    are strongly coupled through the carrier phase, so refining all three axes
    in a small box would stall on the tilted ridge.

    With ``start`` the exhaustive pass is replaced by a local pass of
    ± ``local_steps`` coarse steps around ``start``.
    """
    score = correlation_score(model, residual, gain)
    a_lo, a_hi, a_step = grid.axis("azimuth")
    e_lo, e_hi, e_step = grid.axis("elevation")
    if start is None:
        res = grid_maximize(score, grid, levels=0)
        best = list(res.point)
        best_s, boundary, evals = res.score, res.on_boundary, res.evaluations
        windows = []
    else:
        best = [float(v) for v in start]
        best_s = float(score(*[np.array([b]) for b in best]).ravel()[0])
        boundary, evals = False, 1
        windows = [(local_steps, a_step, e_step)]
    n_half = int(round(1.0 / grid.refine_shrink))
    for _ in range(grid.refine_levels):
        a_step *= grid.refine_shrink
        e_step *= grid.refine_shrink
        windows.append((n_half, a_step, e_step))
    for half, da, de in windows:
        az = best[0] + da * np.arange(-half, half + 1)
        el = best[1] + de * np.arange(-half, half + 1)
        az = az[(az >= a_lo - 1e-9) & (az <= a_hi + 1e-9)]
        el = el[(el >= e_lo - 1e-9) & (el <= e_hi + 1e-9)]
        a = steering_grid(model.array, np.radians(az), np.radians(el), cache=False)
        f_best, s_best = _doppler_profile(model, a.conj().T @ residual, gain, grid)
        i = int(np.argmax(s_best))
        evals += s_best.size
        if s_best[i] > best_s:
            ia, ie = divmod(i, el.size)
            best = [float(az[ia]), float(el[ie]), float(f_best[i])]
            best_s = float(s_best[i])
    return SearchResult(tuple(best), best_s, boundary, evals)


def fit_single_drone(model, y, params, k, grid, fixed=(None, None, None), weighting="none",
                     start=None, levels=None, anchor=None):
    """Best (az_deg, el_deg, fd_hz) for drone k with the other drones held at ``params``.

    ``weighting="gls"`` freezes Γ at ``anchor`` (default ``params``).
    """
    if weighting in ("gamma", "gls"):
        score = (_weighted_score(model, y, params, k) if weighting == "gamma"
                 else _gls_score(model, y, params, k, params if anchor is None else anchor))
        return grid_maximize(score, grid, fixed=fixed, start=start, levels=levels)
    residual = _residual(model, y, params, k)
    if fixed == (None, None, None) and levels is None:
        return profile_search(model, residual, model.gains[k], grid, start=start)
    score = correlation_score(model, residual, model.gains[k])
    return grid_maximize(score, grid, fixed=fixed, start=start, levels=levels)


def _objective(model, y, params, weighting):
    if weighting == "gamma":
        return model.weighted_objective(y, params)
    return model.objective(y, params)


@lru_cache(maxsize=16)
def _pair_tables(array, dec: GridSpec, first: int, n_pilots: int, fs: float):
    az = axis_values(*dec.axis("azimuth"))
    el = axis_values(*dec.axis("elevation"))
    fd = axis_values(*dec.axis("doppler"))
    ls = np.arange(first, first + n_pilots, dtype=float)
    a = steering_grid(array, np.radians(az), np.radians(el), cache=False)
    d = np.exp(-2j * np.pi * np.outer(ls, fd) / fs)              # L x Nf
    aa = a.conj().T @ a                                           # Ga x Ga
    dd = d.T @ d.conj()                                           # Σ_l e^{-jω1 l} e^{jω2 l}
    g = aa.shape[0] * fd.size
    cross = (aa[:, None, :, None] * dd[None, :, None, :]).reshape(g, g)
    return az, el, fd, a, d, np.ascontiguousarray(cross.real), np.ascontiguousarray(cross.imag)


def _joint_pair(model: PilotModel, y: np.ndarray, grid: GridSpec) -> ParamVector:
    """Exhaustive two-drone search over a decimated grid.

    Maximises 2Re(g1* t(c1)) + 2Re(g2* t(c2)) − 2Re(g1* g2 ⟨template(c1), template(c2)⟩),
    which is ‖Y‖² + const − ‖Y − template1 − template2‖², over all pairs.
    """
    az, el, fd, a, d, cross_re, cross_im = _pair_tables(
        model.array, grid.decimated(), model.first_subframe, model.pilots, model.frame.sampling_hz)
    t = ((a.conj().T @ y) @ d).ravel()                            # G = Na·Ne·Nf
    g1, g2 = model.gains[0], model.gains[1]
    s1 = (np.conj(g1) * t).real
    s2 = (np.conj(g2) * t).real
    w = np.conj(g1) * g2
    total = s1[:, None] + s2[None, :]
    total -= w.real * cross_re
    total += w.imag * cross_im
    i1, i2 = np.unravel_index(int(np.argmax(total)), total.shape)
    n_f = fd.size

    def unpack(i):
        ia, f = divmod(i, n_f)
        ie = ia % el.size
        ia //= el.size
        return math.radians(az[ia]), math.radians(el[ie]), fd[f]

    p1, p2 = unpack(i1), unpack(i2)
    return ParamVector([p1[0], p2[0]], [p1[1], p2[1]], [p1[2], p2[2]])


def _greedy(model: PilotModel, y: np.ndarray, grid: GridSpec) -> ParamVector:
    k = model.k
    order = np.argsort(-np.abs(model.gains), kind="stable")
    mid = [math.radians(45.0)] * k
    params = ParamVector(mid, mid, [0.0] * k)
    placed: list[int] = []
    r = y.copy()
    for idx in order:
        res = grid_maximize(correlation_score(model, r, model.gains[idx]), grid)
        az, el, fd = res.point
        params = params.with_drone(idx, math.radians(az), math.radians(el), fd)
        placed.append(idx)
        r = r - model.drone_template(params, idx)
    return params


def mle_estimate(observations, model: PilotModel, grid: GridSpec | None = None,
                 weighting: str = "none", max_cycles: int = 10, tol: float = 1e-3) -> ParamVector:
    """Grid MLE of β from the stacked pilot vector (or MN x L pilot matrix).

    ``weighting="none"`` minimises ‖ȳ − μ(β)‖². ``"gamma"`` minimises the full
    Gaussian negative log-likelihood with the β-dependent covariance Γ(β).
    ``"gls"`` minimises (ȳ−μ(β))ᴴΓ(β₀)⁻¹(ȳ−μ(β)) with Γ frozen at the incumbent
    β₀ and re-anchored after every coordinate cycle (iterated generalised least
    squares); it uses the mean only, so its error covariance is the inverse of
    2Re(JᴴΓ⁻¹J). Both weighted forms start from the unweighted estimate and search
    the refinement windows around each drone, since the weighted surfaces are
    too costly to scan exhaustively. Coordinate cycles stop once no drone moves by more
    than ``tol`` (degrees / 100 Hz units). ``info`` records the objective, the number of
    coordinate cycles and whether any coarse optimum sat on the grid boundary.
    """
    grid = grid or GridSpec()
    if weighting not in ("none", "gamma", "gls"):
        raise ValueError("weighting must be 'none', 'gamma' or 'gls'")
    y = _as_matrix(observations, model)
    if weighting != "none":
        return _polish_weighted(model, y, mle_estimate(y, model, grid), grid, max_cycles, tol,
                                weighting)
    k = model.k
    boundary = False
    if k == 1:
        mid = ParamVector([math.radians(45.0)], [math.radians(45.0)], [0.0])
        res = fit_single_drone(model, y, mid, 0, grid, weighting=weighting)
        az, el, fd = res.point
        out = ParamVector([math.radians(az)], [math.radians(el)], [fd])
        out.info.update(objective=_objective(model, y, out, weighting), cycles=1,
                        on_boundary=res.on_boundary)
        return out

    params = _joint_pair(model, y, grid) if k == 2 else _greedy(model, y, grid)
    best = _objective(model, y, params, weighting)
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        changed = False
        for idx in range(k):
            # the first cycle searches exhaustively; later ones polish locally
            start = None if cycles == 1 else (math.degrees(params.azimuths[idx]),
                                              math.degrees(params.elevations[idx]),
                                              params.dopplers[idx])
            res = fit_single_drone(model, y, params, idx, grid, weighting=weighting, start=start)
            boundary |= res.on_boundary
            az, el, fd = res.point
            cand = params.with_drone(idx, math.radians(az), math.radians(el), fd)
            val = _objective(model, y, cand, weighting)
            if val < best and not cand.same_as(params):
                changed |= cand.distance(params) > tol
                params, best = cand, val
        if not changed:
            break
    params.info.update(objective=best, cycles=cycles, on_boundary=boundary)
    return params


def _polish_weighted(model: PilotModel, y: np.ndarray, init: ParamVector, grid: GridSpec,
                     max_cycles: int, tol: float, weighting: str = "gamma") -> ParamVector:
    """Local coordinate cycles on a weighted criterion from an unweighted estimate.

    Each drone is re-searched in the refinement windows around its incumbent
    with the others held; a move is kept only when the criterion drops. For
    ``"gls"`` the covariance anchor is the incumbent at the start of the cycle.
    Cycles stop once no drone moves by more than one finest grid step.
    """
    params = init.copy()
    # moves at the finest refinement step are grid jitter, not progress
    fine = grid.refine_shrink ** grid.refine_levels
    resolution = fine * min(grid.azimuth_step, grid.elevation_step, grid.doppler_step / 100.0)
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        anchor = params.copy()

        def crit(p):
            if weighting == "gls":
                return model.gls_objective(y, p, anchor)
            return model.weighted_objective(y, p)

        best = crit(params)
        moved = 0.0
        for idx in range(params.k):
            az, el, fd = params.drone(idx)
            res = fit_single_drone(model, y, params, idx, grid, weighting=weighting,
                                   start=(math.degrees(az), math.degrees(el), fd), anchor=anchor)
            cand = params.with_drone(idx, math.radians(res.point[0]), math.radians(res.point[1]),
                                     res.point[2])
            val = crit(cand)
            if val < best:
                moved = max(moved, cand.distance(params))
                params, best = cand, val
        if moved <= max(tol, resolution * (1 + 1e-9)):
            break
    objective = (model.gls_objective(y, params, params) if weighting == "gls"
                 else model.weighted_objective(y, params))
    params.info.update(objective=objective, cycles=cycles, weighting=weighting,
                       on_boundary=init.info.get("on_boundary", False),
                       unweighted_objective=init.info.get("objective"))
    return params
