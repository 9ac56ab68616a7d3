"""Oracle suite for the closed-form expectations.

Each closed form is compared with an independent evaluation:

* Rician raw moments E[α^c], c = 0..4: adaptive quadrature of α^c f(α).
* von Mises characteristic values E[e^{±jCΔδ}], C = 0, 1, 2: adaptive quadrature
  of the density on (−π, π].
* E3(𝓜, 𝓝) for |𝓜|, |𝓝| ≤ 3: tensor Gauss–Hermite quadrature of the exact
  (non-linearised) phase over Gaussian angle errors.
* Channel moments on a 2x2 array: Monte Carlo over angle errors and defects.

Deterministic checks pass at 1e-4 relative error; Monte Carlo checks pass
within 3 standard errors. The lattice keeps angle errors at or below 0.2°,
where the linearised E3 is accurate to 1e-4; the single 0.5° point uses
𝓜 = 1, 𝓝 = 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from ..analytics.angle_expectation import AngleErrorModel, expectation_E3
from ..analytics.channel_moments import channel_moment_2, channel_moment_4
from ..scene import ArrayConfig, GainPhaseModel, steering_matrix
from ..specfun import rician_moment, vonmises_char

__all__ = ["CheckResult", "run_verify", "RICIAN_LATTICE", "VONMISES_LATTICE", "E3_LATTICE",
           "CHANNEL_CASES", "REL_TOL", "MC_SIGMAS"]

REL_TOL = 1e-4
MC_SIGMAS = 3.0

RICIAN_LATTICE = [(nu, s) for nu in (0.0, 0.5, 0.8, 1.0, 1.15, 2.0) for s in (0.09, 0.1, 0.5, 1.0)] \
    + [(1.0, 0.001)]
VONMISES_LATTICE = [(k, mu) for k in (5.0, 10.0, 50.0, 700.0, 1000.0) for mu in (0.0, 0.3)]
E3_LATTICE = [(az, el, s_az, s_el) for az, el in ((20.0, 20.0), (40.0, 40.0), (60.0, 60.0))
              for s_az, s_el in ((0.05, 0.05), (0.2, 0.1), (0.1, 0.2))]
CHANNEL_CASES = [
    # (error model, errors (az, el, σ_az, σ_el) deg, target (az, el), second drone (az, el))
    (GainPhaseModel.stochastic(0.8, 0.3, 5.0, 0.2), (20.0, 30.0, 0.2, 0.15), (20.0, 30.0), (50.0, 40.0)),
    (GainPhaseModel.stochastic(1.0, 0.1, 50.0), (40.0, 40.0, 0.1, 0.1), (40.0, 40.0), (60.0, 60.0)),
    (GainPhaseModel.stochastic(0.5, 1.0, 1000.0), (60.0, 60.0, 0.2, 0.2), (60.0, 60.0), (20.0, 20.0)),
]


@dataclass
class CheckResult:
    name: str
    value: complex
    oracle: complex
    error: float          # relative error, or |difference| / standard error for Monte Carlo
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: err={self.error:.3g} (tol {self.tolerance:g})"


def _rel(a: complex, b: complex) -> float:
    scale = max(abs(b), 1e-300)
    return abs(a - b) / scale


def _rician_oracle(c, nu, s):
    pdf = lambda a: a / s ** 2 * np.exp(-(a - nu) ** 2 / (2 * s * s)) * special.i0e(a * nu / s ** 2)
    lo = max(0.0, nu - 40 * s)
    hi = nu + 40 * s
    val, _ = integrate.quad(lambda a: a ** c * pdf(a), lo, hi, points=[nu] if lo < nu < hi else None,
                            epsabs=0, epsrel=1e-12, limit=400)
    return val


def rician_checks():
    out = []
    for nu, s in RICIAN_LATTICE:
        for c in range(5):
            v = rician_moment(c, nu, s)
            o = _rician_oracle(c, nu, s)
            e = _rel(v, o)
            out.append(CheckResult(f"rician c={c} nu={nu} sigma={s}", v, o, e, REL_TOL, e < REL_TOL))
    return out


def _vonmises_oracle(cm, sign, mu, kappa):
    norm = 2 * math.pi * special.i0e(kappa)
    dens = lambda x: math.exp(kappa * (math.cos(x - mu) - 1.0)) / norm
    kw = dict(epsabs=1e-15, epsrel=1e-12, limit=400, points=[mu])
    re, _ = integrate.quad(lambda x: math.cos(sign * cm * x) * dens(x), -math.pi, math.pi, **kw)
    im, _ = integrate.quad(lambda x: math.sin(sign * cm * x) * dens(x), -math.pi, math.pi, **kw)
    return complex(re, im)


def vonmises_checks():
    out = []
    for kappa, mu in VONMISES_LATTICE:
        for cm in (0, 1, 2):
            for sign in (1, -1):
                v = vonmises_char(cm, sign, mu, kappa)
                o = _vonmises_oracle(cm, sign, mu, kappa)
                e = _rel(v, o)
                out.append(CheckResult(f"vonmises C={cm} sign={sign:+d} kappa={kappa} mean={mu}",
                                       v, o, e, REL_TOL, e < REL_TOL))
    return out


def _e3_oracle(m_off, n_off, err: AngleErrorModel, array: ArrayConfig, nodes=48):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)        # weight exp(−x²/2)
    w = w / math.sqrt(2 * math.pi)
    phi = err.azimuth_rad + err.sigma_azimuth * x
    th = err.elevation_rad + err.sigma_elevation * x
    k = 2 * math.pi * array.spacing_wavelengths
    ph = k * (m_off * np.cos(phi)[:, None] + n_off * np.sin(phi)[:, None]) * np.sin(th)[None, :]
    return complex(np.sum(w[:, None] * w[None, :] * np.exp(1j * ph)))


def e3_checks():
    array = ArrayConfig(2, 2)
    out = []
    cases = [(az, el, sa, se, m, n) for az, el, sa, se in E3_LATTICE
             for m, n in itertools.product(range(-3, 4), repeat=2)]
    cases.append((20.0, 20.0, 0.5, 0.5, 1, 0))
    for az, el, sa, se, m, n in cases:
        err = AngleErrorModel(math.radians(az), math.radians(el), math.radians(sa), math.radians(se))
        v = expectation_E3(m, n, err, array)
        o = _e3_oracle(m, n, err, array)
        e = _rel(v, o)
        out.append(CheckResult(f"E3 M={m} N={n} at ({az},{el}) sigma=({sa},{se}) deg",
                               v, o, e, REL_TOL, e < REL_TOL))
    return out


def _channel_mc(array, error: GainPhaseModel, err: AngleErrorModel, a1, a2, samples, rng):
    """Sample |ĥᴴh₁|², |ĥᴴh₁|⁴ and |ĥᴴh₁|²|ĥᴴh₂|² (unit path loss)."""
    phi = rng.normal(err.azimuth_rad, err.sigma_azimuth, samples)
    th = rng.normal(err.elevation_rad, err.sigma_elevation, samples)
    h_hat = steering_matrix(array, phi, th)
    mn = array.size
    nu, s = error.rician_location, error.rician_scale
    alpha = np.abs(nu + s * (rng.standard_normal((mn, samples)) + 1j * rng.standard_normal((mn, samples))))
    delta = rng.vonmises(error.vonmises_mean, error.vonmises_concentration, (mn, samples))
    g = alpha * np.exp(1j * delta)
    x1 = np.abs(np.sum(h_hat.conj() * g * a1[:, None], axis=0)) ** 2
    x2 = np.abs(np.sum(h_hat.conj() * g * a2[:, None], axis=0)) ** 2
    return x1, x1 ** 2, x1 * x2


def channel_checks(samples: int = 200_000, seed: int = 20240):
    array = ArrayConfig(2, 2)
    rng = np.random.default_rng(seed)
    out = []
    for i, (error, (az, el, sa, se), (t_az, t_el), (o_az, o_el)) in enumerate(CHANNEL_CASES):
        err = AngleErrorModel(math.radians(az), math.radians(el), math.radians(sa), math.radians(se))
        first = (math.radians(t_az), math.radians(t_el), 1.0)
        second = (math.radians(o_az), math.radians(o_el), 1.0)
        a1 = steering_matrix(array, [first[0]], [first[1]])[:, 0]
        a2 = steering_matrix(array, [second[0]], [second[1]])[:, 0]
        draws = _channel_mc(array, error, err, a1, a2, samples, rng)
        values = (channel_moment_2(array, err, first[0], first[1], 1.0, error),
                  channel_moment_4(array, err, first, first, error),
                  channel_moment_4(array, err, first, second, error))
        for label, v, d in zip(("E|h^H h|^2", "E|h^H h|^4", "E|h^H h1|^2|h^H h2|^2"), values, draws):
            mean = float(d.mean())
            se = float(d.std(ddof=1) / math.sqrt(samples))
            z = abs(complex(v).real - mean) / se
            ok = z < MC_SIGMAS and abs(complex(v).imag) <= 1e-9 * abs(complex(v))
            out.append(CheckResult(f"channel case {i} {label}", v, mean, z, MC_SIGMAS, ok))
    return out


def run_verify(progress=None) -> list[CheckResult]:
    """Run every group; ``progress(group_name, results)`` is called after each group."""
    results = []
    for name, fn in (("rician", rician_checks), ("vonmises", vonmises_checks), ("e3", e3_checks),
                     ("channel", channel_checks)):
        res = fn()
        results += res
        if progress is not None:
            progress(name, res)
    return results
