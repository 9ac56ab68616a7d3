"""End-to-end acceptance checks at full trial counts.

Each test prints one ``CRITERION n: PASS|FAIL`` line (visible even without
``-s``) and then asserts. The whole module takes on the order of an hour or
more on one core; deselect it with ``-m "not acceptance"`` for quick runs.
"""

import time

import numpy as np
import pytest
from scipy import stats

from pilotloc.analytics import mean_jacobian
from pilotloc.harness.config import ExperimentSpec
from pilotloc.harness.report import emit_csv
from pilotloc.harness.runner import analytic_overlays, run_experiment, sdr_monte_carlo
from pilotloc.harness.scenarios import SCENARIOS, get_scenario
from pilotloc.harness.verify import run_verify
from pilotloc.locate import ParamVector, PilotModel
from pilotloc.scene import ArrayConfig, DroneTruth, FrameConfig, GainPhaseModel, SceneConfig

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail, lines=()):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
            for line in lines:
                print(line)
    return _report


def _run(name, **kw):
    return run_experiment(ExperimentSpec.for_scenario(name, **kw))


def test_criterion_01_oracle_suite(report):
    t0 = time.perf_counter()
    results = run_verify()
    elapsed = time.perf_counter() - t0
    failed = [r for r in results if not r.passed]
    ok = not failed and elapsed < 600
    report(1, ok, f"{len(results) - len(failed)}/{len(results)} oracle checks in {elapsed:.0f} s",
           [r.line() for r in failed])
    assert not failed
    assert elapsed < 600


def _random_scene(rng):
    k = int(rng.integers(1, 4))
    array = ArrayConfig(int(rng.integers(2, 7)), int(rng.integers(2, 7)))
    drones = tuple(DroneTruth(rng.uniform(0.1, 1.4), rng.uniform(0.1, 1.4), rng.uniform(-8e3, 8e3),
                              tx_power_w=rng.uniform(0.2, 1.0), range_m=rng.uniform(20.0, 150.0))
                   for _ in range(k))
    error = GainPhaseModel.stochastic(rng.uniform(0.3, 1.5), rng.uniform(0.05, 1.0),
                                      rng.uniform(5.0, 1000.0))
    frame = FrameConfig(subframes=int(rng.integers(1, 6)))
    return SceneConfig(array, drones), frame, error


def test_criterion_02_mean_jacobian_vs_finite_differences(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        scene, frame, error = _random_scene(rng)
        model = PilotModel.from_scene(scene, frame, error, 0.1)
        p0 = ParamVector.from_scene(scene)
        jac = mean_jacobian(model, p0)
        x0 = p0.as_array()
        k = scene.k
        for j in range(x0.size):
            h = 1e-6 if j < 2 * k else 1e-2
            up, dn = x0.copy(), x0.copy()
            up[j] += h
            dn[j] -= h
            mu = [model.mean(ParamVector(v[:k], v[k:2 * k], v[2 * k:])) for v in (up, dn)]
            fd = (mu[0] - mu[1]) / (2 * h)
            worst = max(worst, np.max(np.abs(fd - jac[:, j])) / np.max(np.abs(jac[:, j])))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 60
    report(2, ok, f"max relative error {worst:.2e} over 20 scenarios in {elapsed:.1f} s")
    assert worst < 1e-6
    assert elapsed < 60


def test_criterion_03_estimate_distributions(report):
    rep = _run("fig2", trials=1000)
    pt = rep.get("base", "mle").points[0]
    est = pt.samples["estimates"]                 # (deg, deg, 100 Hz)
    means = est.mean(axis=0) * np.array([1.0, 1.0, 100.0])
    bias = np.abs(means - np.array([20.0, 20.0, 2000.0]))
    skew = stats.skew(est, axis=0)
    kurt = stats.kurtosis(est, axis=0)
    ok = bool(bias[0] < 0.1 and bias[1] < 0.1 and bias[2] < 20.0
              and np.all(np.abs(skew) <= 0.3) and np.all(np.abs(kurt) <= 0.3))
    report(3, ok, f"bias (deg, deg, Hz) {np.round(bias, 4)}, skew {np.round(skew, 3)}, "
                  f"excess kurtosis {np.round(kurt, 3)}, failures {pt.metrics['failures']}")
    assert bias[0] < 0.1 and bias[1] < 0.1 and bias[2] < 20.0
    assert np.all(np.abs(skew) <= 0.3)
    assert np.all(np.abs(kurt) <= 0.3)


def test_criterion_04_rmse_tracks_crlb_and_defect_ordering(report):
    rep = _run("fig3", trials=200, sweep_values=(10.0, 15.0, 20.0))
    snr = rep.series["small_gain/mle"].column("sweep_value")
    high = snr >= 15.0
    ratios = {}
    for s in rep.series.values():
        for q, crlb in (("phi_deg", "crlb_phi_deg"), ("theta_deg", "crlb_theta_deg"),
                        ("fd_hz", "crlb_fd_hz")):
            ratios[(s.variant, q)] = (s.column(f"rmse_{q}") / s.column(crlb))[high]
    ratio_ok = all(np.all((r >= 0.9) & (r <= 1.6)) for r in ratios.values())

    def col(variant, c):
        return rep.series[f"{variant}/mle"].column(c)

    order = []
    for small, large in (("small_gain", "large_gain"), ("small_phase", "large_phase")):
        for q in ("rmse_phi_deg", "rmse_theta_deg", "rmse_fd_hz"):
            order.append(np.all(col(small, q) < col(large, q)))
        order.append(np.all(col(small, "sdr_empirical") > col(large, "sdr_empirical")))
    order_ok = all(order)
    lo = min(float(r.min()) for r in ratios.values())
    hi = max(float(r.max()) for r in ratios.values())
    report(4, ratio_ok and order_ok,
           f"RMSE/CRLB at 15-20 dB in [{lo:.2f}, {hi:.2f}], defect ordering holds: {order_ok}",
           [f"    {v:12s} {q:10s} ratio {np.round(r, 3)}" for (v, q), r in ratios.items()])
    assert ratio_ok
    assert order_ok


def test_criterion_05_second_order_sdr_beats_first_order(report):
    sc = get_scenario("fig5")
    rows, ok = [], True
    for snr in sc.sweep_values:
        kw = {"snr_db": float(snr)}
        mc, hw, _ = sdr_monte_carlo(sc, "base", kw, 10_000)
        overlay, _ = analytic_overlays(sc, "base", kw)
        e1 = abs(overlay["sdr_analytic_1st"] - mc)
        e2 = abs(overlay["sdr_analytic_2nd"] - mc)
        point_ok = e2 < e1 and (snr < 10.0 or e2 / mc < 0.05)
        ok &= point_ok
        rows.append(f"    {snr:5.1f} dB  MC {mc:.4f} ± {hw:.4f}  1st err {e1:.4f}  "
                    f"2nd err {e2:.4f} ({100 * e2 / mc:.2f}%)")
    report(5, ok, "second-order SDR closer to Monte Carlo at every SNR point", rows)
    assert ok


def test_criterion_06_win_win_over_snr(report):
    rep = _run("fig5", trials=200)
    ok, lines = True, []
    for est in ("mle", "aoml", "music"):
        s = rep.get("base", est)
        rmse, sdr = s.column("rmse_phi_deg"), s.column("sdr_empirical")
        rho = stats.spearmanr(rmse, sdr)[0]
        this = bool(np.all(np.diff(rmse) < 0) and np.all(np.diff(sdr) > 0) and rho < -0.95)
        ok &= this
        lines.append(f"    {est:6s} rmse {np.round(rmse, 3)} sdr {np.round(sdr, 3)} "
                     f"spearman {rho:.3f} {'ok' if this else 'FAIL'}")
    report(6, ok, "RMSE(φ) falls and sum rate rises with SNR for mle, aoml, music", lines)
    assert ok


def test_criterion_07_aoml_convergence(report):
    rep = _run("fig6", trials=100)
    pt = rep.get("base", "aoml").points[0]
    iters = pt.samples["iterations"]
    mono = pt.samples["monotone"]
    med = float(np.median(iters))
    ok = med <= 25 and bool(np.all(mono)) and iters.size == 100
    report(7, ok, f"median iterations {med:g} (max {iters.max()}), "
                  f"monotone traces {int(mono.sum())}/{iters.size}")
    assert iters.size == 100
    assert med <= 25
    assert np.all(mono)


def test_criterion_08_power_allocation(report):
    rep = _run("fig4", trials=200)
    opt = {}
    for v in ("equal_range", "fifth_range"):
        s = rep.get(v, "mle")
        w = s.column("sweep_value")
        opt[v] = (float(w[np.argmin(s.column("rmse_phi_deg"))]),
                  float(w[np.argmax(s.column("sdr_empirical"))]))
    eq_loc, eq_com = opt["equal_range"]
    fi_loc, fi_com = opt["fifth_range"]
    eq_ok = 0.4 <= eq_loc <= 0.6 and 0.4 <= eq_com <= 0.6
    fi_ok = fi_loc > 0.5 and fi_com < 0.5
    lines = []
    for v in ("equal_range", "half_range", "fifth_range"):
        s = rep.get(v, "mle")
        lines.append(f"    {v:12s} rmse_phi {np.round(s.column('rmse_phi_deg'), 3)}")
        lines.append(f"    {'':12s} sdr      {np.round(s.column('sdr_empirical'), 3)}")
    report(8, eq_ok and fi_ok,
           f"equal range optima (RMSE {eq_loc}, SDR {eq_com}); "
           f"fifth range optima (RMSE {fi_loc}, SDR {fi_com})", lines)
    assert eq_ok
    assert fi_ok


def test_criterion_09_joint_window_gains(report):
    rep = _run("fig8", trials=1000)
    mm, mu, ao = (rep.get("base", e) for e in ("mle-mle", "music-mle", "aoml"))
    w = mm.column("sweep_value")
    i2, i101 = int(np.flatnonzero(w == 2)[0]), int(np.flatnonzero(w == 101)[0])
    checks = {}
    for name, s in (("mle-mle", mm), ("music-mle", mu)):
        r, e = s.column("rmse_phi_deg"), s.column("ser")
        checks[f"{name} rmse"] = r[i101] <= 0.8 * r[i2]
        checks[f"{name} ser"] = e[i101] <= 0.8 * e[i2]
    r_mm, r_mu = mm.column("rmse_phi_deg"), mu.column("rmse_phi_deg")
    checks["mle-mle <= music-mle at 2"] = r_mm[i2] <= r_mu[i2]
    checks["gap shrinks"] = r_mm[i101] / r_mu[i101] > r_mm[i2] / r_mu[i2]
    checks["mle-mle beats aoml rmse"] = r_mm[i101] < ao.column("rmse_phi_deg")[i101]
    checks["mle-mle beats aoml ser"] = mm.column("ser")[i101] < ao.column("ser")[i101]
    ok = all(bool(v) for v in checks.values())
    report(9, ok, ", ".join(f"{k}: {bool(v)}" for k, v in checks.items()),
           [f"    {s.estimator:9s} rmse {np.round(s.column('rmse_phi_deg'), 3)} "
            f"ser {np.round(s.column('ser'), 4)}" for s in (mm, mu, ao)])
    assert ok


def test_criterion_10_worker_count_invariance(report, tmp_path):
    mismatched = []
    for name in SCENARIOS:
        texts = []
        for workers in (1, 2):
            out = tmp_path / f"{name}-{workers}"
            emit_csv(_run(name, trials=2, base_seed=11, workers=workers), out)
            texts.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if texts[0] != texts[1] or not texts[0]:
            mismatched.append(name)
    ok = not mismatched
    report(10, ok, f"{len(SCENARIOS)} scenarios byte-identical across 1 and 2 workers"
           if ok else f"mismatch in {mismatched}")
    assert ok
