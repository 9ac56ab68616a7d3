import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from pilotloc.specfun import (SeriesConvergenceError, SeriesPolicy, bessel_i, bessel_i_ratios,
                              erf_complex, hermite_poly, log_bessel_i, rician_moment,
                              vonmises_char)


@pytest.mark.parametrize("q,x", [(0, 0.5), (1, 3.0), (2, 10.0), (5, 50.0), (0, 700.0)])
def test_bessel_matches_scipy(q, x):
    assert bessel_i(q, x) == pytest.approx(special.iv(q, x), rel=1e-12)


def test_log_bessel_beyond_float_range():
    ref = float(mpmath.log(mpmath.besseli(1, 5000)))
    assert log_bessel_i(1, 5000.0) == pytest.approx(ref, rel=1e-12)
    assert math.isinf(bessel_i(0, 1000.0))


@pytest.mark.parametrize("x", [0.3, 5.0, 700.0, 1e4, 1e8])
def test_bessel_ratios_match_scaled_bessel(x):
    r = bessel_i_ratios(x)
    q = np.arange(r.size)
    np.testing.assert_allclose(r, special.ive(q, x) / special.ive(0, x), rtol=1e-10)
    assert r[-1] >= 1e-12 > special.ive(r.size, x) / special.ive(0, x)


def test_series_policy_cap_is_reported():
    pol = SeriesPolicy(max_terms=10)
    res = rician_moment(2, 1.0, 0.001, policy=pol, full_output=True)
    assert not res.converged and res.reason == "max_terms"
    with pytest.raises(SeriesConvergenceError):
        rician_moment(2, 1.0, 0.001, policy=pol)


@given(nu=st.floats(0.0, 3.0), s=st.floats(0.05, 2.0))
@settings(max_examples=60, deadline=None)
def test_rician_second_moment_closed_form(nu, s):
    assert rician_moment(2, nu, s) == pytest.approx(nu * nu + 2 * s * s, rel=1e-10)
    assert rician_moment(4, nu, s) == pytest.approx(nu ** 4 + 8 * nu * nu * s * s + 8 * s ** 4, rel=1e-9)


@given(nu=st.floats(0.0, 3.0), s=st.floats(0.05, 2.0))
@settings(max_examples=40, deadline=None)
def test_rician_mean_hypergeometric_form(nu, s):
    # E[α] = σ √(π/2) L_{1/2}(−ν²/2σ²), L_{1/2}(x) = ₁F₁(−1/2; 1; x)
    ref = s * math.sqrt(math.pi / 2) * special.hyp1f1(-0.5, 1.0, -nu * nu / (2 * s * s))
    assert rician_moment(1, nu, s) == pytest.approx(ref, rel=1e-9)


def test_rician_small_scale_concentrates_on_location():
    assert rician_moment(3, 1.0, 0.001) == pytest.approx(1.0, rel=1e-5)


def test_rician_third_moment_vs_quadrature():
    nu, s = 0.8, 0.3
    pdf = lambda a: a / s ** 2 * math.exp(-(a * a + nu * nu) / (2 * s * s)) * special.i0(a * nu / s ** 2)
    ref, _ = integrate.quad(lambda a: a ** 3 * pdf(a), 0, 10, epsrel=1e-12)
    assert rician_moment(3, nu, s) == pytest.approx(ref, rel=1e-9)


@given(kappa=st.floats(0.5, 2000.0), mu=st.floats(-1.0, 1.0), c=st.integers(1, 3),
       sign=st.sampled_from([1, -1]))
@settings(max_examples=60, deadline=None)
def test_vonmises_full_circle_closed_form(kappa, mu, c, sign):
    ref = special.ive(c, kappa) / special.ive(0, kappa) * np.exp(1j * sign * c * mu)
    assert abs(vonmises_char(c, sign, mu, kappa) - ref) < 1e-9


@given(kappa=st.floats(0.5, 100.0), mu=st.floats(-1.0, 1.0), c=st.integers(0, 2))
@settings(max_examples=30, deadline=None)
def test_vonmises_conjugate_symmetry(kappa, mu, c):
    bounds = (-2.0, 2.5)
    a = vonmises_char(c, 1, mu, kappa, bounds)
    b = vonmises_char(c, -1, mu, kappa, bounds)
    assert abs(a - b.conjugate()) < 1e-12


def test_vonmises_truncated_interval_vs_quadrature():
    kappa, mu, lo, hi = 3.0, 0.2, -1.0, 2.0
    dens = lambda x: math.exp(kappa * math.cos(x - mu)) / (2 * math.pi * special.i0(kappa))
    re, _ = integrate.quad(lambda x: math.cos(2 * x) * dens(x), lo, hi, epsabs=1e-14)
    im, _ = integrate.quad(lambda x: math.sin(2 * x) * dens(x), lo, hi, epsabs=1e-14)
    assert abs(vonmises_char(2, 1, mu, kappa, (lo, hi)) - complex(re, im)) < 1e-10


@pytest.mark.parametrize("kappa", [2.0, 10.0])
def test_vonmises_taylor_equals_exact(kappa):
    exact = vonmises_char(1, 1, 0.0, kappa, (-1.5, 2.0))
    taylor = vonmises_char(1, 1, 0.0, kappa, (-1.5, 2.0), method="taylor")
    assert abs(exact - taylor) < 1e-10


def test_vonmises_argument_checks():
    with pytest.raises(ValueError):
        vonmises_char(1, 2, 0.0, 1.0)
    with pytest.raises(ValueError):
        vonmises_char(1, 1, 0.0, 1.0, (-4.0, 0.0))
    with pytest.raises(NotImplementedError):
        vonmises_char(1, 1, 0.3, 1.0, method="taylor")


def test_erf_complex_matches_mpmath():
    z = 0.7 - 1.3j
    assert abs(erf_complex(z) - complex(mpmath.erf(z))) < 1e-14


@pytest.mark.parametrize("n", [0, 1, 2, 5, 9])
def test_hermite_matches_numpy(n):
    x = np.linspace(-2, 2, 7)
    ref = np.polynomial.hermite.hermval(x, [0] * n + [1])
    np.testing.assert_allclose(hermite_poly(n, x), ref, rtol=1e-12)
    with pytest.raises(ValueError):
        hermite_poly(21, x)
