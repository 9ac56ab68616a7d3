import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotloc.scene import (ArrayConfig, FrameConfig, GainPhaseModel, NoiseModel, SceneConfig,
                            psk_symbols, sample_defects, steering_matrix, steering_vector,
                            synthesize_frame)

from conftest import drone

angles = st.floats(min_value=0.01, max_value=math.pi / 2 - 0.01)


def direct_steering(array, az, el):
    m, n = array.indices()
    d = array.spacing_wavelengths
    return np.exp(-2j * math.pi * (m * d * math.cos(az) * math.sin(el)
                                   + n * d * math.sin(az) * math.sin(el)))


@given(az=angles, el=angles, m=st.integers(1, 6), n=st.integers(1, 6))
@settings(max_examples=50, deadline=None)
def test_steering_matches_elementwise_formula(az, el, m, n):
    arr = ArrayConfig(m, n)
    np.testing.assert_allclose(steering_vector(arr, az, el), direct_steering(arr, az, el), atol=1e-12)


@given(az=angles, el=angles)
@settings(max_examples=30, deadline=None)
def test_steering_unit_modulus_and_reference_element(az, el):
    a = steering_vector(ArrayConfig(3, 5), az, el)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert a[0] == 1.0


def test_steering_row_major_order():
    arr = ArrayConfig(2, 3)
    m, n = arr.indices()
    assert list(m) == [0, 0, 0, 1, 1, 1]
    assert list(n) == [0, 1, 2, 0, 1, 2]


def test_psk_symbols_are_unit_roots():
    s = psk_symbols(np.arange(16), 16)
    np.testing.assert_allclose(s ** 16, 1.0, atol=1e-12)
    assert s[0] == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        ArrayConfig(0, 3)
    with pytest.raises(ValueError):
        drone(95, 20, 0.0)
    with pytest.raises(ValueError):
        FrameConfig(psk_order=3)
    with pytest.raises(ValueError):
        NoiseModel()
    with pytest.raises(ValueError):
        SceneConfig(ArrayConfig(1, 1), (drone(10, 10, 0.0), drone(20, 20, 0.0)))
    with pytest.raises(ValueError):
        GainPhaseModel.stochastic(1.0, 0.0, 10.0)


def test_velocity_consistency_check():
    d = drone(20, 20, 2000.0, velocity_mps=2000.0 * 1.6e-3 / math.cos(math.radians(20)))
    d.check_velocity(1.6e-3)
    with pytest.raises(ValueError):
        drone(20, 20, 2000.0, velocity_mps=10.0).check_velocity(1.6e-3)


def test_noise_variance_references(two_drone_scene):
    sc = two_drone_scene
    rec = NoiseModel(snr_db=10.0).variance(sc)
    assert rec == pytest.approx(np.sum(sc.powers * sc.path_losses ** 2) / 10.0)
    eta = 1.6e-3 / (4 * math.pi * 100.0)
    assert NoiseModel(snr_db=10.0, snr_reference="transmit").variance(sc) == pytest.approx(
        np.sum(sc.powers) * eta ** 2 / 10.0)


def test_ideal_defects_are_exact(small_array):
    a, d = sample_defects(GainPhaseModel.ideal(), small_array, seed=1)
    assert np.all(a == 1.0) and np.all(d == 0.0)


def test_defect_draws_match_rician_and_vonmises_moments():
    # closed forms: E[α²] = ν² + 2σ², E[e^{jΔδ}] = I1(κ)/I0(κ)
    from scipy import special
    model = GainPhaseModel.stochastic(0.8, 0.3, 5.0)
    arr = ArrayConfig(200, 200)
    a, d = sample_defects(model, arr, seed=7)
    n = a.size
    assert abs(np.mean(a ** 2) - (0.8 ** 2 + 2 * 0.09)) < 4 * np.std(a ** 2) / math.sqrt(n)
    c = np.mean(np.cos(d))
    assert abs(c - special.i1(5.0) / special.i0(5.0)) < 4 * np.std(np.cos(d)) / math.sqrt(n)


def test_noiseless_frame_matches_model(two_drone_scene, short_frame):
    f = synthesize_frame(two_drone_scene, short_frame, GainPhaseModel.ideal(),
                         NoiseModel(variance_per_antenna=0.0), seed=3)
    sc = two_drone_scene
    a = steering_matrix(sc.array, sc.azimuths, sc.elevations)
    for li in range(short_frame.subframes):
        l = li + 1
        rot = sc.path_losses * np.sqrt(sc.powers) * np.exp(2j * math.pi * sc.dopplers * l / 1e5)
        np.testing.assert_allclose(f.samples[:, 0, li], a @ rot, rtol=1e-12)
        s = psk_symbols(f.sent_symbols[:, :, li], 16)
        np.testing.assert_allclose(f.samples[:, 1:, li], (a * rot) @ s, rtol=1e-12)


def test_frame_is_deterministic_and_noise_scales(two_drone_scene, short_frame, defects):
    f1 = synthesize_frame(two_drone_scene, short_frame, defects, NoiseModel(snr_db=0.0), seed=11)
    f2 = synthesize_frame(two_drone_scene, short_frame, defects, NoiseModel(snr_db=0.0), seed=11)
    f3 = synthesize_frame(two_drone_scene, short_frame, defects, NoiseModel(snr_db=20.0), seed=11)
    np.testing.assert_array_equal(f1.samples, f2.samples)
    np.testing.assert_allclose(f3.noise_draws, f1.noise_draws / 10.0, rtol=1e-12)
    np.testing.assert_array_equal(f1.sent_symbols, f3.sent_symbols)


def test_stacked_pilots_are_subframe_major(two_drone_scene, short_frame, defects):
    f = synthesize_frame(two_drone_scene, short_frame, defects, NoiseModel(snr_db=5.0), seed=2)
    mn = two_drone_scene.array.size
    y = f.stacked_pilots()
    np.testing.assert_array_equal(y[mn:2 * mn], f.samples[:, 0, 1])
    assert f.stacked_pilots(2).size == 2 * mn


def test_explicit_symbols_shape_checked(two_drone_scene, short_frame):
    with pytest.raises(ValueError):
        synthesize_frame(two_drone_scene, short_frame, GainPhaseModel.ideal(),
                         NoiseModel(snr_db=5.0), seed=1, symbols=np.zeros((2, 2, 2)))
