import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotloc.analytics import (AngleErrorModel, SdrMethod, channel_moment_2, channel_moment_4,
                                e3_table, expectation_E3, fim, mean_jacobian, noise_moments,
                                rate_from_moments, sdr_predict)
from pilotloc.locate import ParamVector, PilotModel
from pilotloc.scene import (ArrayConfig, DroneTruth, FrameConfig, GainPhaseModel, SceneConfig,
                            steering_vector)
from pilotloc.specfun import rician_moment, vonmises_char

ARR = ArrayConfig(2, 2)


def e3_quadrature(m, n, err, array, nodes=60):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    phi = err.azimuth_rad + err.sigma_azimuth * x
    th = err.elevation_rad + err.sigma_elevation * x
    k = 2 * math.pi * array.spacing_wavelengths
    ph = k * (m * np.cos(phi)[:, None] + n * np.sin(phi)[:, None]) * np.sin(th)[None, :]
    return complex(np.sum(np.outer(w, w) * np.exp(1j * ph)))


@pytest.mark.parametrize("m,n", [(1, 0), (0, 1), (2, -1), (-3, 3), (3, 3)])
@pytest.mark.parametrize("sig", [(0.05, 0.05), (0.2, 0.1), (0.1, 0.2)])
def test_e3_series_vs_quadrature(m, n, sig):
    err = AngleErrorModel(math.radians(35.0), math.radians(50.0), *np.radians(sig))
    assert abs(expectation_E3(m, n, err, ARR) - e3_quadrature(m, n, err, ARR)) < 1e-4


def test_e3_gaussian_method_close_at_small_error():
    err = AngleErrorModel(math.radians(40.0), math.radians(40.0), *np.radians((0.1, 0.1)))
    a = expectation_E3(2, 1, err, ARR)
    b = expectation_E3(2, 1, err, ARR, method="gaussian")
    assert abs(a - b) < 1e-4


def test_e3_zero_error_is_the_deterministic_phase():
    az, el = math.radians(30.0), math.radians(70.0)
    err = AngleErrorModel(az, el, 0.0, 0.0)
    ref = np.exp(1j * math.pi * (2 * math.cos(az) - math.sin(az)) * math.sin(el))
    assert abs(expectation_E3(2, -1, err, ARR) - ref) < 1e-14
    with pytest.raises(ValueError):
        expectation_E3(1, 1, AngleErrorModel(az, el, 0.0, 0.01), ARR)


@given(az=st.floats(5.0, 85.0), el=st.floats(5.0, 85.0))
@settings(max_examples=20, deadline=None)
def test_e3_table_conjugate_symmetry(az, el):
    err = AngleErrorModel(math.radians(az), math.radians(el), 0.002, 0.003)
    t = e3_table(err, ARR, 2, 2)
    np.testing.assert_allclose(t[::-1, ::-1], t.conj(), atol=1e-14)
    assert t[2, 2] == 1.0


def _defect_expectation(indices, signs, model):
    """E[Π_i g_i^{±}] by grouping equal indices; g = α e^{jΔδ}, independent across antennas."""
    out = 1.0 + 0j
    for idx in set(indices):
        pos = [s for i, s in zip(indices, signs) if i == idx]
        net = sum(pos)
        ph = vonmises_char(abs(net), 1 if net >= 0 else -1, model.vonmises_mean,
                           model.vonmises_concentration)
        out *= rician_moment(len(pos), model.rician_location, model.rician_scale) * ph
    return out


def _brute_moment(h_hat, targets, model):
    # Σ over (MN)^{2J} index tuples of Π conj(ĥ)·a or ĥ·conj(a) times the defect expectation
    vecs, signs = [], []
    for a in targets:
        vecs += [h_hat.conj() * a, h_hat * a.conj()]
        signs += [1, -1]
    total = 0.0 + 0j
    for tup in itertools.product(range(h_hat.size), repeat=len(vecs)):
        w = np.prod([v[i] for v, i in zip(vecs, tup)])
        total += w * _defect_expectation(tup, signs, model)
    return total.real


@pytest.mark.parametrize("model", [GainPhaseModel.stochastic(0.8, 0.3, 5.0, 0.2),
                                   GainPhaseModel.stochastic(1.0, 0.1, 50.0)])
def test_channel_moments_vs_brute_force(model):
    # deterministic estimate (zero angle spread) off the truth, 2x2 array
    est = (math.radians(33.0), math.radians(41.0))
    err = AngleErrorModel(*est, 0.0, 0.0)
    h_hat = steering_vector(ARR, *est)
    t1 = (math.radians(30.0), math.radians(40.0), 1.0)
    t2 = (math.radians(60.0), math.radians(20.0), 1.0)
    a1 = steering_vector(ARR, t1[0], t1[1])
    a2 = steering_vector(ARR, t2[0], t2[1])
    assert channel_moment_2(ARR, err, t1[0], t1[1], 1.0, model) == pytest.approx(
        _brute_moment(h_hat, [a1], model), rel=1e-10)
    assert channel_moment_4(ARR, err, t1, t1, model) == pytest.approx(
        _brute_moment(h_hat, [a1, a1], model), rel=1e-10)
    assert channel_moment_4(ARR, err, t1, t2, model) == pytest.approx(
        _brute_moment(h_hat, [a1, a2], model), rel=1e-10)


def test_channel_moment_path_loss_scaling():
    err = AngleErrorModel(0.5, 0.6, 0.001, 0.001)
    model = GainPhaseModel.stochastic(1.0, 0.1, 50.0)
    base = channel_moment_2(ARR, err, 0.5, 0.6, 1.0, model)
    assert channel_moment_2(ARR, err, 0.5, 0.6, 0.1, model) == pytest.approx(0.01 * base)


def test_noise_moments_vs_monte_carlo():
    rng = np.random.default_rng(5)
    h = steering_vector(ARR, 0.4, 0.9)
    s2 = 0.3
    n = math.sqrt(s2 / 2) * (rng.standard_normal((200_000, 4)) + 1j * rng.standard_normal((200_000, 4)))
    x = np.abs(n @ h.conj()) ** 2
    p, p4, mixed = noise_moments(ARR, s2, channel_second=2.0)
    assert abs(x.mean() - p) < 4 * x.std() / math.sqrt(x.size)
    assert abs((x ** 2).mean() - p4) < 4 * (x ** 2).std() / math.sqrt(x.size)
    assert mixed == pytest.approx(2.0 * p)


def _scene(az, el, fd):
    return SceneConfig(ArrayConfig(3, 3), tuple(DroneTruth(math.radians(a), math.radians(e), f)
                                                for a, e, f in zip(az, el, fd)))


def test_mean_jacobian_vs_finite_differences():
    sc = _scene([25.0, 55.0], [35.0, 65.0], [1500.0, 4200.0])
    model = PilotModel.from_scene(sc, FrameConfig(subframes=4), GainPhaseModel.stochastic(1.0, 0.1, 50.0), 0.1)
    p0 = ParamVector.from_scene(sc)
    jac = mean_jacobian(model, p0)
    x0 = p0.as_array()
    for j in range(x0.size):
        h = 1e-6 if j < 4 else 1e-2
        up, dn = x0.copy(), x0.copy()
        up[j] += h
        dn[j] -= h
        mu = [model.mean(ParamVector(v[:2], v[2:4], v[4:])) for v in (up, dn)]
        fd = (mu[0] - mu[1]) / (2 * h)
        assert np.max(np.abs(fd - jac[:, j])) < 1e-6 * np.max(np.abs(jac[:, j]))


def test_fim_is_symmetric_positive_and_matches_dense_form():
    sc = _scene([25.0], [35.0], [1500.0])
    model = PilotModel.from_scene(sc, FrameConfig(subframes=3), GainPhaseModel.stochastic(1.0, 0.1, 50.0), 0.05)
    p = ParamVector.from_scene(sc)
    res = fim(model, p)
    j = mean_jacobian(model, p)
    dense = 2 * np.real(j.conj().T @ np.linalg.inv(model.covariance(p)) @ j)
    np.testing.assert_allclose(res.fim, dense, rtol=1e-8)
    assert np.all(np.linalg.eigvalsh(res.fim) > 0)
    np.testing.assert_allclose(res.crlb_diag, np.diag(np.linalg.inv(dense)), rtol=1e-6)
    assert not res.singular


def test_fim_singular_for_coincident_drones():
    sc = _scene([40.0, 40.0], [40.0, 40.0], [3000.0, 3000.0])
    model = PilotModel.from_scene(sc, FrameConfig(subframes=3), GainPhaseModel.ideal(), 0.1)
    res = fim(model, ParamVector.from_scene(sc))
    assert res.singular and res.ill_conditioned
    assert np.all(np.isinf(res.crlb_diag))


def test_fim_needs_randomness():
    sc = _scene([40.0], [40.0], [3000.0])
    model = PilotModel.from_scene(sc, FrameConfig(subframes=3), GainPhaseModel.ideal(), 0.0)
    with pytest.raises(ValueError):
        fim(model, ParamVector.from_scene(sc))


@given(ex=st.floats(0.1, 10.0), ey=st.floats(0.1, 10.0))
def test_rate_orders_agree_without_variance(ex, ey):
    r1, _, _ = rate_from_moments(ex, ey, 0.0, 0.0, 0.0, SdrMethod.FIRST_ORDER)
    r2, eg, eg2 = rate_from_moments(ex, ey, 0.0, 0.0, 0.0, SdrMethod.SECOND_ORDER)
    assert r1 == pytest.approx(r2, rel=1e-12)
    assert eg2 == pytest.approx(eg * eg, rel=1e-12)


def test_sdr_second_order_tracks_monte_carlo():
    # one drone, Gaussian angle errors; log2(1 + γ) sampled with γ_y = |ĥᴴn|² ~ MNσ²·Exp(1)
    sc = _scene([30.0], [40.0], [0.0])
    model = GainPhaseModel.stochastic(1.0, 0.3, 10.0)
    eta2 = float(sc.path_losses[0] ** 2)
    s2 = 2.0 * eta2
    stds = np.radians([[0.5, 0.5]])
    pred = sdr_predict(sc, model, s2, stds, SdrMethod.SECOND_ORDER)
    first = sdr_predict(sc, model, s2, stds, SdrMethod.FIRST_ORDER)
    rng = np.random.default_rng(3)
    n_mc = 100_000
    arr = sc.array
    phi = rng.normal(math.radians(30.0), stds[0, 0], n_mc)
    th = rng.normal(math.radians(40.0), stds[0, 1], n_mc)
    from pilotloc.scene import steering_matrix
    h_hat = steering_matrix(arr, phi, th)
    a = steering_vector(arr, math.radians(30.0), math.radians(40.0))
    alpha = np.abs(1.0 + 0.3 * (rng.standard_normal((arr.size, n_mc)) + 1j * rng.standard_normal((arr.size, n_mc))))
    g = alpha * np.exp(1j * rng.vonmises(0.0, 10.0, (arr.size, n_mc)))
    gx = eta2 * np.abs(np.sum(h_hat.conj() * g * a[:, None], axis=0)) ** 2
    gy = arr.size * s2 * rng.exponential(1.0, n_mc)
    mc = np.mean(np.log2(1 + gx / gy))
    assert abs(pred.sum_rate - mc) < abs(first.sum_rate - mc)
    assert pred.mean_x[0] == pytest.approx(gx.mean(), rel=0.01)
