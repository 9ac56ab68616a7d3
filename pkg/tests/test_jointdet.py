import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from pilotloc.jointdet import (JointAlgorithm, TimeWindow, _fit_streams, mle_mle_window,
                               music_mle_window, phase2_search, run_subframe, window_objective)
from pilotloc.locate import GridSpec, ParamVector, PilotModel, aoml_estimate, match_to_truth
from pilotloc.locate.grid import axis_values
from pilotloc.scene import FrameConfig, GainPhaseModel, NoiseModel, psk_symbols, synthesize_frame

GRID = GridSpec(azimuth_step=2.0, elevation_step=2.0, doppler_step=500.0)
COARSE = GridSpec(azimuth_step=2.0, elevation_step=2.0, doppler_step=2000.0, refine_levels=0)


def _setup(scene, snr_db=None, t_data=8, order=16, seed=1):
    frame = FrameConfig(subframes=1, symbols_per_subframe=t_data, psk_order=order)
    noise = NoiseModel(variance_per_antenna=0.0) if snr_db is None else NoiseModel(snr_db=snr_db)
    f = synthesize_frame(scene, frame, GainPhaseModel.ideal(), noise, seed=seed)
    model = PilotModel.from_scene(scene, frame, GainPhaseModel.ideal(), f.noise_variance)
    return f, model


def test_time_window_validation():
    with pytest.raises(ValueError):
        TimeWindow(0, 3, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        TimeWindow(1, 0)
    with pytest.raises(ValueError):
        TimeWindow(1, 4, np.zeros((2, 1), dtype=int))
    w = TimeWindow(2, 3, np.array([[1], [2]]))
    assert w.t == 2 and w.decoded_prefix.shape == (2, 1)


def test_first_window_is_aoml_on_the_pilot(two_drone_scene):
    f, model = _setup(two_drone_scene, snr_db=5.0)
    y = f.samples[:, :, 0]
    res = mle_mle_window(TimeWindow(1, 1), y, model, GRID)
    ref = aoml_estimate(y[:, :1], replace(model, n_pilots=1, first_subframe=1), GRID)
    assert res.decoded_symbol is None
    np.testing.assert_array_equal(res.params.as_array(), ref.as_array())


@pytest.mark.parametrize("algorithm", ["mle-mle", "music-mle"])
def test_noiseless_subframe_is_decoded_exactly(two_drone_scene, algorithm):
    f, model = _setup(two_drone_scene, snr_db=None, t_data=8)
    results = run_subframe(f.samples[:, :, 0], model, algorithm, GRID)
    assert len(results) == 9
    truth = ParamVector.from_scene(two_drone_scene)
    last = results[-1].params
    perm = list(match_to_truth(last, truth))
    np.testing.assert_allclose(np.degrees(last.azimuths[perm]), np.degrees(truth.azimuths), atol=0.05)
    decoded = np.array([r.decoded_symbol for r in results[1:]]).T[perm]
    np.testing.assert_array_equal(decoded, f.sent_symbols[:, :, 0])


def test_run_subframe_is_deterministic(two_drone_scene):
    f, model = _setup(two_drone_scene, snr_db=3.0, t_data=4)
    a = run_subframe(f.samples[:, :, 0], model, "mle-mle", GRID)
    b = run_subframe(f.samples[:, :, 0], model, JointAlgorithm.MLE_MLE, GRID)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.params.as_array(), rb.params.as_array())


def test_pilot_only_subframe(two_drone_scene):
    f, model = _setup(two_drone_scene, snr_db=10.0, t_data=0)
    res = run_subframe(f.samples[:, :, 0], model, "music-mle", GRID)
    assert len(res) == 1 and res[0].decoded_symbol is None


def test_last_window_limits_the_sweep(two_drone_scene):
    f, model = _setup(two_drone_scene, snr_db=10.0, t_data=6)
    assert len(run_subframe(f.samples[:, :, 0], model, "music-mle", GRID, last_window=3)) == 3


@pytest.mark.parametrize("scene_name,t", [("one_drone_scene", 0), ("one_drone_scene", 2),
                                          ("two_drone_scene", 0), ("two_drone_scene", 2)])
def test_phase2_search_matches_brute_force(request, scene_name, t):
    scene = request.getfixturevalue(scene_name)
    order = 4
    f, model = _setup(scene, snr_db=0.0, t_data=4, order=order, seed=7)
    k = scene.k
    window = TimeWindow(1, t + 1, f.sent_symbols[:, :max(t - 1, 0), 0])
    y = f.samples[:, :t + 1, 0]
    p = ParamVector.from_scene(scene)
    fd, s, val, joint = phase2_search(model, y, p, window, COARSE, order, levels=0)
    assert joint
    axis = axis_values(*COARSE.axis("doppler"))
    best = math.inf
    sym_sets = itertools.product(range(order), repeat=k) if t else [None]
    for syms in sym_sets:
        for dops in itertools.product(axis, repeat=k):
            cand = ParamVector(p.azimuths, p.elevations, dops)
            cols = [np.ones((k, 1))]
            if t > 1:
                cols.append(psk_symbols(window.decoded_prefix, order))
            if t:
                cols.append(psk_symbols(np.array(syms).reshape(k, 1), order))
            best = min(best, window_objective(model, y, cand, np.concatenate(cols, axis=1), 1))
    assert val == pytest.approx(best, rel=1e-9)
    got = window_objective(model, y, ParamVector(p.azimuths, p.elevations, fd),
                           np.concatenate([np.ones((k, 1))]
                                          + ([psk_symbols(window.decoded_prefix, order)] if t > 1 else [])
                                          + ([psk_symbols(s.reshape(k, 1), order)] if t else []), axis=1), 1)
    assert got == pytest.approx(val, rel=1e-9)


def test_stream_fit_matches_brute_force(one_drone_scene):
    order = 8
    f, model = _setup(one_drone_scene, snr_db=0.0, t_data=3, order=order, seed=3)
    rng = np.random.default_rng(0)
    z = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    window = TimeWindow(1, 3, np.array([[3], [5]]))
    dop, syms = _fit_streams(model, z, window, COARSE, order)
    axis = axis_values(*COARSE.axis("doppler"))
    for q in range(2):
        best = min(((np.sum(np.abs(z[q] - np.exp(2j * math.pi * fd / 1e5)
                                   * psk_symbols(np.array([0, window.decoded_prefix[q, 0], s]), order)) ** 2), fd, s)
                    for fd in axis for s in range(order)))
        assert (dop[q], syms[q]) == (best[1], best[2])


def test_music_window_reports_conditioning(two_drone_scene):
    f, model = _setup(two_drone_scene, snr_db=10.0, t_data=4)
    res = music_mle_window(TimeWindow(1, 4, np.zeros((2, 2), dtype=int)), f.samples[:, :, 0], model, GRID)
    assert res.trace["pseudo_inverse"] and not res.trace["ill_conditioned"]
    assert res.trace["condition"] >= 1.0


def test_mle_window_objective_trace_non_increasing(two_drone_scene):
    f, model = _setup(two_drone_scene, snr_db=2.0, t_data=5, seed=4)
    res = run_subframe(f.samples[:, :, 0], model, "mle-mle", GRID)
    for r in res[1:]:
        tr = np.array(r.trace["trace_objective"])
        assert np.all(np.diff(tr) <= 1e-9 * abs(tr[0]))
