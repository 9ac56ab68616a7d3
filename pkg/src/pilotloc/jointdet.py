"""Joint localisation and data detection over growing time windows of one subframe.

Window t+1 holds the pilot and the first t data symbols of subframe l. The
symbols before t are frozen from earlier windows; the window re-estimates the
drone parameters and detects symbol t.

Within a subframe the Doppler only enters through the constant phase
ψ_k = 2π f_k l / f_s, so the window model is

    y_τ ≈ Σ_k b_k e^{jψ_k} s_{τ,k},   b_k = c η_k √P_k a(φ_k, θ_k),  s_{0,k} = 1.

``mle_mle_window`` alternates an angle search (Doppler and symbols fixed) with
a joint search over Doppler and the new symbol (angles fixed).
``music_mle_window`` takes the angles from MUSIC over the window snapshots,
left-multiplies the window by the pseudo-inverse of the estimated [b_k], and
fits Doppler and the new symbol per drone on the compensated streams.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .locate.aoml import SolverConfig, aoml_estimate
from .locate.grid import GridSpec, axis_values, grid_maximize, steering_grid
from .locate.matching import match_to_truth
from .locate.moments import PilotModel
from .locate.music import RankDeficiencyError, music_estimate
from .locate.params import ParamVector
from .scene import psk_symbols, steering_matrix

__all__ = ["TimeWindow", "JointResult", "JointAlgorithm", "mle_mle_window", "music_mle_window",
           "run_subframe", "phase2_search", "window_objective"]

_COND_LIMIT = 1e8


class JointAlgorithm(str, enum.Enum):
    MLE_MLE = "mle-mle"
    MUSIC_MLE = "music-mle"


@dataclass(frozen=True)
class TimeWindow:
    """Window of ``length`` = t+1 slots in subframe ``subframe`` (1-based)."""

    subframe: int
    length: int
    decoded_prefix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=int))

    def __post_init__(self):
        if self.subframe < 1:
            raise ValueError("subframe must be >= 1")
        if self.length < 1:
            raise ValueError("window length must be >= 1")
        prefix = np.asarray(self.decoded_prefix, dtype=int)
        if prefix.ndim != 2:
            prefix = prefix.reshape(-1, 0) if prefix.size == 0 else prefix.reshape(1, -1)
        object.__setattr__(self, "decoded_prefix", prefix)
        if prefix.shape[1] != max(self.length - 2, 0):
            raise ValueError(f"decoded prefix must hold {max(self.length - 2, 0)} symbols per drone")

    @property
    def t(self) -> int:
        """Index of the data symbol detected in this window (0 = pilot only)."""
        return self.length - 1


@dataclass
class JointResult:
    params: ParamVector
    decoded_symbol: np.ndarray | None      # K indices for slot t, None for the pilot-only window
    trace: dict = field(default_factory=dict)


def _window_symbols(window: TimeWindow, k: int, order: int, current=None) -> np.ndarray:
    """K x (t+1) symbol matrix: pilot, frozen prefix, then ``current`` (if any)."""
    cols = [np.ones((k, 1), dtype=complex)]
    if window.decoded_prefix.shape[1]:
        if window.decoded_prefix.shape[0] != k:
            raise ValueError("decoded prefix has the wrong number of drones")
        cols.append(psk_symbols(window.decoded_prefix, order))
    if current is not None:
        cols.append(psk_symbols(np.asarray(current).reshape(k, 1), order))
    return np.concatenate(cols, axis=1)


def _phases(model: PilotModel, dopplers, subframe: int) -> np.ndarray:
    return np.exp(2j * math.pi * np.asarray(dopplers, float) * subframe / model.frame.sampling_hz)


def _columns(model: PilotModel, params: ParamVector) -> np.ndarray:
    """b_k as MN x K: expected steering times c η √P."""
    return steering_matrix(model.array, params.azimuths, params.elevations) * model.gains[None, :]


def window_objective(model: PilotModel, y: np.ndarray, params: ParamVector, symbols: np.ndarray,
                     subframe: int) -> float:
    """‖Y − Σ_k b_k e^{jψ_k} s_k‖² over the window columns."""
    b = _columns(model, params) * _phases(model, params.dopplers, subframe)[None, :]
    r = y - b @ symbols
    return float(np.vdot(r, r).real)


def _doppler_axis(grid: GridSpec) -> np.ndarray:
    return axis_values(*grid.axis("doppler"))


def phase2_search(model: PilotModel, y: np.ndarray, params: ParamVector, window: TimeWindow,
                  grid: GridSpec, order: int, levels: int | None = None):
    """Joint (f_D, s_t) fit with the angles fixed.

    Exhaustive over the coarse Doppler axis of every drone and all symbol
    combinations for K ≤ 2; refinement levels then shrink the Doppler step
    around the optimum with the symbols held. K ≥ 3 falls back to cyclic
    per-drone searches. Returns (dopplers, symbols_t, objective, joint_flag).
    """
    k = params.k
    t = window.t
    l = window.subframe
    fs = model.frame.sampling_hz
    b = _columns(model, params)
    u = b.conj().T @ y                                            # K x (t+1)
    prefix = _window_symbols(window, k, order)                    # known columns (pilot + frozen)
    n_known = prefix.shape[1]                                     # t, or 1 for the pilot-only window
    known = np.sum(prefix.conj() * u[:, :n_known], axis=1)        # Σ_known s*_τ u_τ
    const = float(np.vdot(y, y).real) + float(np.sum(np.abs(b) ** 2)) * (t + 1)
    sym = psk_symbols(np.arange(order), order)
    fd = _doppler_axis(grid)
    lo, hi, step = grid.axis("doppler")
    n_lev = grid.refine_levels if levels is None else levels
    offs = np.arange(-int(round(1 / grid.refine_shrink)), int(round(1 / grid.refine_shrink)) + 1)

    def linear(f_vals, q):
        """−2Re(e^{−jψ} A_q(s)) on (len(f_vals), order) or (len(f_vals),) when t = 0."""
        ph = np.exp(-2j * math.pi * f_vals * l / fs)
        if t == 0:
            return -2.0 * (ph * known[q]).real[:, None]
        a_s = known[q] + sym.conj() * u[q, t]
        return -2.0 * (ph[:, None] * a_s[None, :]).real

    if k == 1:
        tab = linear(fd, 0)
        i, s = np.unravel_index(int(np.argmax(-tab)), tab.shape)
        best_f, best_s = np.array([fd[i]]), np.array([s])
        best = tab[i, s]
        for _ in range(n_lev):
            step *= grid.refine_shrink
            cand = best_f[0] + step * offs
            cand = cand[(cand >= lo - 1e-9) & (cand <= hi + 1e-9)]
            vals = linear(cand, 0)[:, best_s[0] if t else 0]
            j = int(np.argmin(vals))
            if vals[j] < best:
                best, best_f = vals[j], np.array([cand[j]])
        return best_f, (best_s if t else None), const + best, True

    if k == 2:
        rho = np.vdot(b[:, 0], b[:, 1])                           # b1ᴴ b2
        h_known = np.sum(prefix[1] * prefix[0].conj())            # Σ_known s_{τ,2} s*_{τ,1}

        def cross(f1, f2, diff_sym):
            ph = np.exp(2j * math.pi * np.subtract.outer(f2, f1).T * l / fs)   # (n1, n2)
            hv = h_known + diff_sym
            return 2.0 * (rho * ph[:, :, None] * np.atleast_1d(hv)[None, None, :]).real

        if t == 0:
            tab = (linear(fd, 0)[:, None, 0] + linear(fd, 1)[None, :, 0]
                   + cross(fd, fd, np.zeros(1))[:, :, 0])
            i1, i2 = np.unravel_index(int(np.argmin(tab)), tab.shape)
            s_best = None
            best = tab[i1, i2]
        else:
            diff = psk_symbols(np.arange(order), order)           # s2 s1* for index difference
            c = cross(fd, fd, diff)                               # (Nf, Nf, order)
            didx = np.mod(np.subtract.outer(np.arange(order), np.arange(order)).T, order)  # [s1, s2]
            tab = (linear(fd, 0)[:, None, :, None] + linear(fd, 1)[None, :, None, :]
                   + c[:, :, didx])
            i1, i2, s1, s2 = np.unravel_index(int(np.argmin(tab)), tab.shape)
            s_best = np.array([s1, s2])
            best = tab[i1, i2, s1, s2]
        f_best = np.array([fd[i1], fd[i2]])
        for _ in range(n_lev):
            step *= grid.refine_shrink
            c1 = f_best[0] + step * offs
            c2 = f_best[1] + step * offs
            c1 = c1[(c1 >= lo - 1e-9) & (c1 <= hi + 1e-9)]
            c2 = c2[(c2 >= lo - 1e-9) & (c2 <= hi + 1e-9)]
            if t == 0:
                tab = (linear(c1, 0)[:, None, 0] + linear(c2, 1)[None, :, 0]
                       + cross(c1, c2, np.zeros(1))[:, :, 0])
            else:
                d = psk_symbols(np.array([(s_best[1] - s_best[0]) % order]), order)
                tab = (linear(c1, 0)[:, s_best[0]][:, None] + linear(c2, 1)[:, s_best[1]][None, :]
                       + cross(c1, c2, d)[:, :, 0])
            i1, i2 = np.unravel_index(int(np.argmin(tab)), tab.shape)
            if tab[i1, i2] < best:
                best, f_best = tab[i1, i2], np.array([c1[i1], c2[i2]])
        return f_best, s_best, const + best, True

    # K >= 3: cyclic per-drone (f, s) updates on the residual of the others
    f_cur = params.dopplers.copy()
    s_cur = np.zeros(k, dtype=int)
    amps = np.asarray(model.amplitudes)
    for _ in range(5):
        changed = False
        for q in range(k):
            others = [p for p in range(k) if p != q]
            syms = _window_symbols(window, k, order, s_cur if t else None)
            b_all = b * _phases(model, f_cur, l)[None, :]
            resid = y - b_all[:, others] @ syms[others]
            prefix_q = window.decoded_prefix[[q]] if window.decoded_prefix.shape[1] else None
            sub_win = (TimeWindow(l, window.length) if prefix_q is None
                       else TimeWindow(l, window.length, prefix_q))
            sub_params = ParamVector(params.azimuths[[q]], params.elevations[[q]], f_cur[[q]])
            f_q, s_q, _, _ = phase2_search(replace(model, amplitudes=amps[[q]]), resid, sub_params,
                                           sub_win, grid, order, levels)
            if f_q[0] != f_cur[q] or (t and s_q[0] != s_cur[q]):
                changed = True
            f_cur[q] = f_q[0]
            if t:
                s_cur[q] = s_q[0]
        if not changed:
            break
    cur = ParamVector(params.azimuths, params.elevations, f_cur)
    val = window_objective(model, y, cur, _window_symbols(window, k, order, s_cur if t else None), l)
    return f_cur, (s_cur if t else None), val, False


def _angle_search(model, y, params, symbols, q, grid, subframe, local_steps=2):
    """Local (az, el) search for drone q with Doppler and all symbols fixed.

    The window collapses to z = Σ_τ R_τ s*_{τ,q} on the residual R of the other
    drones, and the score is Re(g* e^{−jψ} a(φ,θ)ᴴ z).
    """
    others = [p for p in range(params.k) if p != q]
    b = _columns(model, params) * _phases(model, params.dopplers, subframe)[None, :]
    resid = y - b[:, others] @ symbols[others]
    z = resid @ symbols[q].conj()
    weight = np.conj(model.gains[q] * _phases(model, params.dopplers[q:q + 1], subframe)[0])

    def score(az, el, fd):
        a = steering_grid(model.array, np.radians(az), np.radians(el),
                          cache=az.size * el.size > 400)
        return (weight * (a.conj().T @ z)).real.reshape(az.size, el.size, 1)

    az0, el0 = math.degrees(params.azimuths[q]), math.degrees(params.elevations[q])
    a_lo, a_hi, a_step = grid.axis("azimuth")
    e_lo, e_hi, e_step = grid.axis("elevation")
    local = replace(
        grid,
        azimuth_range=(max(a_lo, az0 - local_steps * a_step), min(a_hi, az0 + local_steps * a_step)),
        elevation_range=(max(e_lo, el0 - local_steps * e_step), min(e_hi, el0 + local_steps * e_step)),
    )
    res = grid_maximize(score, local, fixed=(None, None, float(params.dopplers[q])))
    return res.point[0], res.point[1]


def mle_mle_window(window: TimeWindow, samples: np.ndarray, model: PilotModel, grid: GridSpec,
                   solver: SolverConfig | None = None, init: ParamVector | None = None,
                   order: int = 16) -> JointResult:
    """Alternating ML over one window; ``samples`` is the MN x (T+1) subframe block.

    The pilot-only window runs AO-ML on the single pilot. Longer windows start
    from ``init`` (normally the previous window's estimate), detect s_t with
    the angles and Doppler held, then alternate angle updates and the joint
    (Doppler, s_t) search. Updates are kept only when the window objective
    drops, and the loop stops when the parameters move less than ε
    (degrees / 100 Hz units) with an unchanged symbol decision.
    """
    solver = solver or SolverConfig()
    l = window.subframe
    y = np.asarray(samples)[:, :window.length]
    pilot_model = replace(model, n_pilots=1, first_subframe=l)
    if window.t == 0:
        est = aoml_estimate(y[:, :1], pilot_model, grid, solver, init=init)
        return JointResult(est, None, dict(iterations=est.info["iterations"],
                                           converged=est.info["converged"],
                                           objective=est.info["objective"]))
    if init is None:
        init = aoml_estimate(y[:, :1], pilot_model, grid, solver)
    k = init.k
    params = ParamVector(init.azimuths, init.elevations, init.dopplers)
    # keep the incoming Doppler; only the symbol decision is taken from this pass
    _, s_t, _, joint = phase2_search(pilot_model, y, params, window, grid, order, levels=0)
    s_t = np.asarray(s_t)
    symbols = _window_symbols(window, k, order, s_t)
    best = window_objective(pilot_model, y, params, symbols, l)
    trace = [best]
    converged = False
    z = 0
    for z in range(1, solver.max_iters + 1):
        prev, prev_s = params.copy(), s_t.copy()
        for q in range(k):
            az, el = _angle_search(pilot_model, y, params, symbols, q, grid, l)
            cand = params.with_drone(q, az=math.radians(az), el=math.radians(el))
            val = window_objective(pilot_model, y, cand, symbols, l)
            if val < best:
                params, best = cand, val
        f_new, s_new, val, joint = phase2_search(pilot_model, y, params, window, grid, order)
        if val < best:
            params = ParamVector(params.azimuths, params.elevations, f_new)
            s_t, best = np.asarray(s_new), val
            symbols = _window_symbols(window, k, order, s_t)
        trace.append(best)
        if params.distance(prev) < solver.epsilon and np.array_equal(s_t, prev_s):
            converged = True
            break
    params.info.update(objective=best)
    return JointResult(params, np.asarray(s_t, dtype=int),
                       dict(iterations=z, converged=converged, objective=best, trace_objective=trace,
                            joint_symbol_search=joint))


def _compensate(model: PilotModel, az, el, y):
    b = steering_matrix(model.array, az, el) * model.gains[None, :]
    cond = float(np.linalg.cond(b))
    return np.linalg.pinv(b) @ y, cond


def _fit_streams(model: PilotModel, z: np.ndarray, window: TimeWindow, grid: GridSpec, order: int):
    """Per-drone (f_D, s_t) fit of z_{k,τ} ≈ e^{jψ_k} s_{τ,k}; returns (dopplers, symbols_t).

    Minimising |z − e^{jψ}s|² is maximising Re(e^{−jψ} Σ_τ z_τ s*_τ). The
    coarse pass covers the Doppler axis and every symbol; refinement shrinks
    the Doppler step around the optimum with the symbol held.
    """
    k = z.shape[0]
    t = window.t
    l = window.subframe
    known_syms = _window_symbols(window, k, order)
    n_known = known_syms.shape[1]
    known = np.sum(z[:, :n_known] * known_syms.conj(), axis=1)
    sym = psk_symbols(np.arange(order), order)
    fd = _doppler_axis(grid)
    lo, hi, step0 = grid.axis("doppler")
    offs = np.arange(-int(round(1 / grid.refine_shrink)), int(round(1 / grid.refine_shrink)) + 1)
    dop = np.empty(k)
    syms = np.zeros(k, dtype=int) if t else None
    for q in range(k):
        stat = known[q] + (z[q, t] * sym.conj() if t else np.zeros(1))     # per symbol
        rot = np.conj(_phases(model, fd, l))
        score = (rot[:, None] * stat[None, :]).real
        i, j = np.unravel_index(int(np.argmax(score)), score.shape)
        f_best, s_best = fd[i], j
        step = step0
        for _ in range(grid.refine_levels):
            step *= grid.refine_shrink
            cand = np.clip(f_best + step * offs, lo, hi)
            sc = (np.conj(_phases(model, cand, l)) * stat[s_best]).real
            f_best = cand[int(np.argmax(sc))]
        dop[q] = f_best
        if t:
            syms[q] = s_best
    return dop, syms


def music_mle_window(window: TimeWindow, samples: np.ndarray, model: PilotModel, grid: GridSpec,
                     previous: ParamVector | None = None, order: int = 16) -> JointResult:
    """MUSIC angles over the window, pseudo-inverse compensation, per-drone ML of (f_D, s_t).

    MUSIC peaks are unlabelled. With ``previous`` they are matched to the
    previous window's angles; otherwise every labelling is tried and the one
    with the smallest window objective kept.
    """
    l = window.subframe
    y = np.asarray(samples)[:, :window.length]
    k = model.k
    pilot_model = replace(model, n_pilots=1, first_subframe=l)
    az, el = music_estimate(y, k, grid, model.array)
    if previous is not None:
        perms = [match_to_truth(ParamVector(az, el, np.zeros(k)), previous)]
    else:
        perms = list(itertools.permutations(range(k)))
    best = None
    for perm in perms:
        perm = list(perm)
        z, cond = _compensate(pilot_model, az[perm], el[perm], y)
        dop, syms = _fit_streams(pilot_model, z, window, grid, order)
        params = ParamVector(az[perm], el[perm], dop)
        symbols = _window_symbols(window, k, order, syms)
        val = window_objective(pilot_model, y, params, symbols, l)
        if best is None or val < best[0]:
            best = (val, params, syms, cond)
    val, params, syms, cond = best
    flags = {"objective": val, "condition": cond, "ill_conditioned": cond > _COND_LIMIT,
             "pseudo_inverse": True}
    params.info.update(objective=val)
    return JointResult(params, None if syms is None else np.asarray(syms, dtype=int), flags)


def run_subframe(samples: np.ndarray, model: PilotModel, algorithm, grid: GridSpec,
                 subframe: int = 1, solver: SolverConfig | None = None, order: int = 16,
                 last_window: int | None = None) -> list:
    """Process windows 1..T+1 (or up to ``last_window``) of one subframe in order.

    Decoded symbols are appended to the prefix of the next window. A window
    that raises keeps the previous estimate, records the error in its trace and
    detects its symbol with that estimate, so the sweep always completes.
    """
    algorithm = JointAlgorithm(algorithm)
    samples = np.asarray(samples)
    n_slots = samples.shape[1]
    last = n_slots if last_window is None else min(last_window, n_slots)
    k = model.k
    prefix = np.zeros((k, 0), dtype=int)
    results = []
    prev = None
    for length in range(1, last + 1):
        window = TimeWindow(subframe, length, prefix if length > 2 else np.zeros((k, 0), dtype=int))
        try:
            if algorithm is JointAlgorithm.MLE_MLE:
                res = mle_mle_window(window, samples, model, grid, solver, init=prev, order=order)
            else:
                res = music_mle_window(window, samples, model, grid, previous=prev, order=order)
        except (RankDeficiencyError, np.linalg.LinAlgError, ValueError) as exc:
            if prev is None:
                raise
            res = _fallback(window, samples, model, prev, grid, order, exc)
        results.append(res)
        prev = res.params
        if length >= 2:
            prefix = np.concatenate([prefix, res.decoded_symbol.reshape(k, 1)], axis=1)
    return results


def _fallback(window: TimeWindow, samples, model: PilotModel, prev: ParamVector, grid: GridSpec,
              order: int, exc: Exception) -> JointResult:
    """Keep ``prev`` and detect symbol t with it after a failed window."""
    l = window.subframe
    y = np.asarray(samples)[:, :window.length]
    pilot_model = replace(model, n_pilots=1, first_subframe=l)
    params = prev.copy()
    s_t = None
    if window.t:
        _, s_t, _, _ = phase2_search(pilot_model, y, params, window, grid, order, levels=0)
        s_t = np.asarray(s_t, dtype=int)
    params.info["error"] = repr(exc)
    return JointResult(params, s_t, {"failed": True, "error": repr(exc)})
