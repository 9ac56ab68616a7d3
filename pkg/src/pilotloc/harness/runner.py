"""Monte Carlo execution: synthesize, estimate, decode, measure, aggregate.

Every trial is a pure function of its seed, so the report does not depend on
the worker count: trials are fanned out to a process pool and written back to
pre-assigned slots before aggregation.

Joint-detection scenarios sweep the window length. One subframe run yields
every window, so all window points of a trial share the point-0 seed and the
windows of one trial are read from the same run.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..analytics.fim import fim
from ..analytics.sdr import SdrMethod, sdr_predict
from ..comms import ChannelEstimate, measure_link
from ..jointdet import run_subframe
from ..locate.aoml import aoml_estimate
from ..locate.matching import match_to_truth
from ..locate.mle import mle_estimate
from ..locate.moments import PilotModel
from ..locate.music import music_doppler_estimate
from ..locate.params import ParamVector
from ..scene import synthesize_frame
from .config import ExperimentSpec
from .report import MonteCarloReport, PointResult, SeriesResult
from .scenarios import Scenario

__all__ = ["ExperimentError", "TrialOutcome", "run_experiment", "run_trial", "point_kwargs",
           "analytic_overlays", "sdr_monte_carlo"]

FAILURE_LIMIT = 0.10
_Z95 = 1.959963984540054


class ExperimentError(RuntimeError):
    """More than 10% of the trials of some series failed."""


@dataclass
class TrialOutcome:
    """One estimator on one trial; arrays are per drone, errors in degrees / Hz."""

    ok: bool
    az_err: np.ndarray | None = None
    el_err: np.ndarray | None = None
    fd_err: np.ndarray | None = None
    estimate: np.ndarray | None = None       # normalized (deg, deg, 100 Hz) vector
    symbol_errors: int = 0
    symbols: int = 0
    sum_rate: float = math.nan
    extra: dict = field(default_factory=dict)
    error: str | None = None


def point_kwargs(sweep_variable: str, value) -> dict:
    if sweep_variable == "snr_db":
        return {"snr_db": float(value)}
    if sweep_variable == "power_coefficient":
        return {"power_coefficient": float(value)}
    if sweep_variable == "pilots":
        return {"n_pilots": int(value)}
    return {}


def _errors(est: ParamVector, truth: ParamVector):
    perm = list(match_to_truth(est, truth))
    est = est.permuted(perm)
    return (est, np.degrees(est.azimuths - truth.azimuths), np.degrees(est.elevations - truth.elevations),
            est.dopplers - truth.dopplers, perm)


def _dldd_outcome(name, frame_obs, scene, error, model, grid) -> TrialOutcome:
    obs = frame_obs.stacked_pilots(model.pilots)
    extra = {}
    if name == "mle":
        # Γ-weighted least squares (efficient for the mean-only FIM) when Γ is invertible
        est = mle_estimate(obs, model, grid, weighting="gls" if model.noise_variance > 0 else "none")
    elif name == "aoml":
        est = aoml_estimate(obs, model, grid)
        trace = np.asarray(est.info.get("trace_objective", []), dtype=float)
        extra["iterations"] = int(est.info["iterations"])
        extra["converged"] = bool(est.info["converged"])
        extra["monotone"] = bool(np.all(np.diff(trace) <= 1e-9 * max(1.0, abs(trace[0])))) \
            if trace.size else True
    elif name == "music":
        est = music_doppler_estimate(obs, model, grid)
    else:
        raise ValueError(f"unknown estimator {name!r}")
    truth = ParamVector.from_scene(scene)
    est, d_az, d_el, d_fd, _ = _errors(est, truth)
    lm = measure_link(frame_obs, ChannelEstimate(scene.array, est, model.frame.sampling_hz), error)
    return TrialOutcome(True, d_az, d_el, d_fd, est.normalized(), int(lm.symbol_errors.sum()),
                        lm.symbols * scene.k, lm.sum_rate, extra)


def _joint_outcomes(name, frame_obs, scene, error, model, grid, windows) -> list:
    """Per requested window: localisation error, decision error at slot t, achieved rate."""
    truth = ParamVector.from_scene(scene)
    fs = model.frame.sampling_hz
    last = max(windows)
    results = run_subframe(frame_obs.samples[:, :, 0], model, name, grid,
                           order=frame_obs.psk_order, last_window=last)
    sent = frame_obs.sent_symbols[:, :, 0]
    out = []
    for w in windows:
        res = results[w - 1]
        est, d_az, d_el, d_fd, perm = _errors(res.params, truth)
        sym_err, n_sym = 0, 0
        if res.decoded_symbol is not None:
            sym_err = int(np.sum(res.decoded_symbol[perm] != sent[:, w - 2]))
            n_sym = scene.k
        lm = measure_link(frame_obs, ChannelEstimate(scene.array, est, fs), error)
        extra = {"failed": bool(res.trace.get("failed", False))}
        out.append(TrialOutcome(True, d_az, d_el, d_fd, est.normalized(), sym_err, n_sym,
                                lm.sum_rate, extra))
    return out


def run_trial(task):
    """Worker entry point: ``task`` = (scenario, variants, estimators, sweep_variable, value,
    windows, seed, snr_override). Returns {(variant, estimator): [TrialOutcome per window]}."""
    scenario, variants, estimators, sweep_variable, value, windows, seed, snr_override = task
    kw = point_kwargs(sweep_variable, value)
    if snr_override is not None and "snr_db" not in kw:
        kw["snr_db"] = snr_override
    out = {}
    for vname in variants:
        scene, frame, error, noise = scenario.build(vname, **kw)
        frame_obs = synthesize_frame(scene, frame, error, noise, seed=seed)
        sigma2 = noise.variance(scene)
        model = PilotModel.from_scene(scene, frame, error, sigma2)
        for est_name in estimators:
            try:
                if scenario.joint and est_name in ("mle-mle", "music-mle"):
                    res = _joint_outcomes(est_name, frame_obs, scene, error, model, scenario.grid,
                                          windows)
                else:
                    one = _dldd_outcome(est_name, frame_obs, scene, error, model, scenario.grid)
                    res = [one] * len(windows)
            except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                res = [TrialOutcome(False, error=f"{type(exc).__name__}: {exc}")] * len(windows)
            out[(vname, est_name)] = res
    return out


def _rmse_ci(err: np.ndarray):
    """Drone-averaged RMSE and a 95% half-width (delta method per drone, then averaged)."""
    if err.shape[0] == 0:
        return math.nan, math.nan
    sq = err ** 2
    ms = sq.mean(axis=0)
    rmse_k = np.sqrt(ms)
    n = sq.shape[0]
    sd = sq.std(axis=0, ddof=1) if n > 1 else np.zeros_like(ms)
    with np.errstate(divide="ignore", invalid="ignore"):
        hw = np.where(rmse_k > 0, _Z95 * sd / math.sqrt(n) / (2 * rmse_k), 0.0)
    return float(rmse_k.mean()), float(hw.mean())


def _mean_ci(x: np.ndarray):
    if x.size == 0:
        return math.nan, math.nan
    hw = _Z95 * x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else 0.0
    return float(x.mean()), float(hw)


def analytic_overlays(scenario: Scenario, variant: str, kw: dict) -> tuple[dict, list]:
    """CRLB and SDR overlays from the closed forms, independent of any trial.

    Returns (overlay columns, notes). The SDR uses the CRLB standard deviations.
    """
    scene, frame, error, noise = scenario.build(variant, **kw)
    sigma2 = noise.variance(scene)
    res = {"crlb_phi_deg": math.nan, "crlb_theta_deg": math.nan, "crlb_fd_hz": math.nan,
           "sdr_analytic_1st": math.nan, "sdr_analytic_2nd": math.nan}
    notes = []
    model = PilotModel.from_scene(scene, frame, error, sigma2)
    try:
        f = fim(model, ParamVector.from_scene(scene))
        s_phi, s_th, s_f = f.stddevs()
        res.update(crlb_phi_deg=float(np.degrees(s_phi).mean()),
                   crlb_theta_deg=float(np.degrees(s_th).mean()), crlb_fd_hz=float(s_f.mean()))
        notes += f.notes
        stds = np.column_stack([s_phi, s_th])
        if np.all(np.isfinite(stds)):
            for key, method in (("sdr_analytic_1st", SdrMethod.FIRST_ORDER),
                                ("sdr_analytic_2nd", SdrMethod.SECOND_ORDER)):
                p = sdr_predict(scene, error, sigma2, stds, method=method)
                res[key] = p.sum_rate
                notes += p.warnings
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        notes.append(f"analytic overlay failed: {exc}")
    return res, notes


def sdr_monte_carlo(scenario: Scenario, variant: str, kw: dict, trials: int, base_seed: int = 0,
                    estimator_stddevs=None):
    """Monte Carlo sum rate with Gaussian angle estimates, the quantity the SDR overlay predicts.

    Each trial synthesizes a frame (defects, noise, symbols) from seed
    ``base_seed + trial``, draws (φ̂_k, θ̂_k) ~ N(truth, σ²) per drone with σ from
    the CRLB (or ``estimator_stddevs``, K x 2 radians), and measures the
    realized rate of MRC decoding with those channels. The Doppler estimate is
    the true value; its error only rotates ĥ_k by a common phase, which leaves
    every |ĥ_kᴴ·|² and hence the rate unchanged. Returns (mean, 95% half-width,
    stddevs used).
    """
    scene, frame, error, noise = scenario.build(variant, **kw)
    sigma2 = noise.variance(scene)
    if estimator_stddevs is None:
        model = PilotModel.from_scene(scene, frame, error, sigma2)
        s_phi, s_th, _ = fim(model, ParamVector.from_scene(scene)).stddevs()
        estimator_stddevs = np.column_stack([s_phi, s_th])
    stds = np.asarray(estimator_stddevs, dtype=float).reshape(scene.k, 2)
    truth = ParamVector.from_scene(scene)
    rates = np.empty(trials)
    for i in range(trials):
        seed = base_seed + i
        f = synthesize_frame(scene, frame, error, noise, seed=seed)
        rng = np.random.default_rng([seed, 1])       # independent of the frame's stream
        est = ParamVector(truth.azimuths + stds[:, 0] * rng.standard_normal(scene.k),
                          truth.elevations + stds[:, 1] * rng.standard_normal(scene.k),
                          truth.dopplers)
        rates[i] = measure_link(f, ChannelEstimate(scene.array, est, frame.sampling_hz)).sum_rate
    mean, hw = _mean_ci(rates)
    return mean, hw, stds


def _aggregate(outcomes: list, analytic: dict) -> tuple[dict, dict]:
    ok = [o for o in outcomes if o.ok]
    k = ok[0].az_err.size if ok else 0
    def stack(attr):
        return np.array([getattr(o, attr) for o in ok], dtype=float).reshape(len(ok), k)
    az, el, fd = stack("az_err"), stack("el_err"), stack("fd_err")
    m = dict(analytic)
    m["rmse_phi_deg"], m["ci_rmse_phi_deg"] = _rmse_ci(az)
    m["rmse_theta_deg"], m["ci_rmse_theta_deg"] = _rmse_ci(el)
    m["rmse_fd_hz"], m["ci_rmse_fd_hz"] = _rmse_ci(fd)
    n_sym = np.array([o.symbols for o in ok], dtype=float)
    n_err = np.array([o.symbol_errors for o in ok], dtype=float)
    if n_sym.sum() > 0:
        m["ser"] = float(n_err.sum() / n_sym.sum())
        per = n_err[n_sym > 0] / n_sym[n_sym > 0]
        m["ci_ser"] = _mean_ci(per)[1]
    else:
        m["ser"], m["ci_ser"] = math.nan, math.nan
    m["sdr_empirical"], m["ci_sdr_empirical"] = _mean_ci(np.array([o.sum_rate for o in ok]))
    m["trials"] = len(outcomes)
    m["failures"] = len(outcomes) - len(ok)
    samples = {"az_err": az, "el_err": el, "fd_err": fd,
               "estimates": np.array([o.estimate for o in ok]).reshape(len(ok), 3 * k),
               "symbol_errors": n_err, "symbols": n_sym,
               "sum_rate": np.array([o.sum_rate for o in ok])}
    for key in sorted({key for o in ok for key in o.extra}):
        samples[key] = np.array([o.extra.get(key) for o in ok])
    samples["errors"] = [o.error for o in outcomes if not o.ok]
    return m, samples


def run_experiment(spec: ExperimentSpec, progress=None) -> MonteCarloReport:
    """Run every (variant, estimator, sweep point) of ``spec`` and aggregate.

    Raises ExperimentError when more than 10% of a series' trials fail at any
    point; fewer failures are counted in the report.
    """
    t0 = time.perf_counter()
    sc = spec.resolve()
    joint = sc.joint
    values = spec.sweep_values
    if joint:
        windows = tuple(int(v) for v in values)
        point_groups = [(0, None, windows)]
    else:
        point_groups = [(p, v, (1,)) for p, v in enumerate(values)]
    series = {}
    for vname in spec.variants:
        for est in spec.estimators:
            series[f"{vname}/{est}"] = SeriesResult(vname, est)
    warnings = []
    pool = ProcessPoolExecutor(max_workers=spec.workers) if spec.workers > 1 else None
    try:
        for p, value, windows in point_groups:
            tasks = [(sc, spec.variants, spec.estimators, spec.sweep_variable, value, windows,
                      spec.seed(p, i), spec.snr_db) for i in range(spec.trials)]
            if pool is None:
                results = [run_trial(t) for t in tasks]
            else:
                results = list(pool.map(run_trial, tasks, chunksize=max(1, spec.trials // (4 * spec.workers))))
            kw = point_kwargs(spec.sweep_variable, value)
            if spec.snr_db is not None and "snr_db" not in kw:
                kw["snr_db"] = spec.snr_db
            for vname in spec.variants:
                analytic, notes = analytic_overlays(sc, vname, kw)
                for est in spec.estimators:
                    s = series[f"{vname}/{est}"]
                    for wi, w in enumerate(windows):
                        outs = [r[(vname, est)][wi] for r in results]
                        metrics, samples = _aggregate(outs, analytic)
                        sweep_value = float(w) if joint else float(value)
                        if metrics["failures"] > FAILURE_LIMIT * metrics["trials"]:
                            raise ExperimentError(
                                f"{s.name} at {spec.sweep_variable}={sweep_value}: "
                                f"{metrics['failures']}/{metrics['trials']} trials failed; "
                                f"first error: {samples['errors'][0]}")
                        s.points.append(PointResult(sweep_value, metrics, samples, list(notes)))
                        warnings += [f"{s.name} @ {sweep_value}: {n}" for n in notes]
            if progress is not None:
                progress(p, value)
    finally:
        if pool is not None:
            pool.shutdown()
    return MonteCarloReport(spec.scenario, spec.sweep_variable, series, spec.base_seed, spec.trials,
                            time.perf_counter() - t0, warnings)
