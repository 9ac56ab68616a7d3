"""Expectation of the estimated-steering cross phase over Gaussian angle errors.

    E3(𝓜, 𝓝) = E[exp(j2π/λ (𝓜 d cosφ̂ + 𝓝 d sinφ̂) sinθ̂)],
    φ̂ ~ N(φ, σ_φ²), θ̂ ~ N(θ, σ_θ²) independent, integrated over finite bounds.

Both evaluation methods linearise sinθ̂ about θ and the inner phase
ν(φ̂) = 2π/λ(𝓜 d cosφ̂ + 𝓝 d sinφ̂) about φ. The θ̂ integral is then exact in
terms of erf, leaving a one-dimensional φ̂ integral:

* ``"series"`` keeps the Gaussian weight exp(−Δ²/(2σ_φ²)) exact, Taylor-expands
  the remaining exp(bΔ + c'Δ²) and the erf difference in Δ = φ̂ − φ (Hermite
  coefficients), and integrates each power of Δ against the Gaussian over the
  bounds by a two-term recursion.
* ``"gaussian"`` replaces the erf difference by its interior value 2 and the
  bounds by ±∞, which gives a single complex exponential.

The linearisation error is of order ν σ² (phase), so both forms are accurate
to ~1e-4 only when |ν| σ² ≲ 1e-4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scene import ArrayConfig
from ..specfun import DEFAULT_POLICY, SeriesConvergenceError, SeriesPolicy, erf_complex

__all__ = ["AngleErrorModel", "expectation_E3", "e3_table", "default_bounds"]


@dataclass(frozen=True)
class AngleErrorModel:
    """Gaussian estimation errors (radians) of one drone's azimuth and elevation."""

    azimuth_rad: float
    elevation_rad: float
    sigma_azimuth: float
    sigma_elevation: float

    def __post_init__(self):
        if self.sigma_azimuth < 0 or self.sigma_elevation < 0:
            raise ValueError("standard deviations must be non-negative")


def default_bounds(centre: float, sigma: float, width: float = 6.0):
    """centre ± width·σ, clipped to (0, π/2)."""
    return max(centre - width * sigma, 0.0), min(centre + width * sigma, math.pi / 2)


def _gauss_power_integrals(c4: float, lo: float, hi: float, p_max: int) -> np.ndarray:
    """G_p = ∫_lo^hi Δ^p exp(−c4 Δ²) dΔ for p = 0..p_max."""
    g = np.empty(p_max + 1)
    r = math.sqrt(c4)
    g[0] = 0.5 * math.sqrt(math.pi / c4) * (math.erf(r * hi) - math.erf(r * lo))
    e_lo, e_hi = math.exp(-c4 * lo * lo), math.exp(-c4 * hi * hi)
    if p_max >= 1:
        g[1] = (e_lo - e_hi) / (2 * c4)
    for p in range(2, p_max + 1):
        g[p] = ((p - 1) * g[p - 2] + lo ** (p - 1) * e_lo - hi ** (p - 1) * e_hi) / (2 * c4)
    return g


def _exp_quadratic_coeffs(b: complex, c: complex, order: int) -> np.ndarray:
    """Taylor coefficients of exp(bΔ + cΔ²) up to Δ^order."""
    e = np.zeros(order + 1, dtype=complex)
    e[0] = 1.0
    # f' = (b + 2cΔ) f  ⇒  (p+1) e_{p+1} = b e_p + 2c e_{p-1}
    for p in range(order):
        e[p + 1] = (b * e[p] + (2 * c * e[p - 1] if p >= 1 else 0.0)) / (p + 1)
    return e


def _erf_coeffs(a: complex, slope: complex, order: int) -> np.ndarray:
    """Taylor coefficients of erf(a + slope·Δ) up to Δ^order.

    d^q/dx^q erf(x) = (2/√π)(−1)^{q−1} H_{q−1}(x) e^{−x²} for q ≥ 1.
    """
    f = np.zeros(order + 1, dtype=complex)
    f[0] = erf_complex(a)
    if order == 0:
        return f
    w = 2.0 / math.sqrt(math.pi) * np.exp(-a * a)
    h_prev, h = 0.0 + 0j, 1.0 + 0j          # H_{-1} (unused), H_0
    s_pow = 1.0 + 0j
    fact = 1.0
    for q in range(1, order + 1):
        s_pow *= slope
        fact *= q
        f[q] = w * (-1) ** (q - 1) * h * s_pow / fact
        # H_{n+1} = 2x H_n − 2n H_{n−1}, here n = q−1
        h_prev, h = h, 2 * a * h - 2 * (q - 1) * h_prev
    return f


def _degenerate(nu_m, nu_n, az, el, k0):
    return complex(np.exp(1j * k0 * (nu_m * math.cos(az) + nu_n * math.sin(az)) * math.sin(el)))


def expectation_E3(m_off: int, n_off: int, errors: AngleErrorModel, array: ArrayConfig,
                   bounds=None, policy: SeriesPolicy = DEFAULT_POLICY, method: str = "series",
                   full_output: bool = False):
    """E3 for integer offsets (𝓜, 𝓝).

    ``bounds`` is ((φ_min, φ_max), (θ_min, θ_max)) in radians, defaulting to
    truth ± 6σ clipped to (0, π/2). ``policy.taylor_orders`` fixes the
    (exp, erf) Taylor orders; otherwise both start at 8 and grow until the
    newest anti-diagonal contributes less than ``policy.abs_tol`` relative to
    the sum. With ``full_output`` returns (value, orders).
    """
    if method not in ("series", "gaussian"):
        raise ValueError("method must be 'series' or 'gaussian'")
    phi, th = errors.azimuth_rad, errors.elevation_rad
    s_phi, s_th = errors.sigma_azimuth, errors.sigma_elevation
    k0 = 2.0 * math.pi * array.spacing_wavelengths          # 2π d/λ
    if m_off == 0 and n_off == 0:
        return (1.0 + 0j, (0, 0)) if full_output else 1.0 + 0j
    if s_phi == 0.0 or s_th == 0.0:
        if s_phi != 0.0 or s_th != 0.0:
            raise ValueError("both standard deviations must be zero or both positive")
        val = _degenerate(m_off, n_off, phi, th, k0)
        return (val, (0, 0)) if full_output else val

    s, c = math.sin(th), math.cos(th)
    nu0 = k0 * (m_off * math.cos(phi) + n_off * math.sin(phi))          # ν at φ̂ = φ
    c6 = k0 * (n_off * math.cos(phi) - m_off * math.sin(phi))           # dν/dφ̂
    kq = c * c * s_th * s_th / 2.0                                      # cos²θ/(4C2)
    c4 = 1.0 / (2.0 * s_phi * s_phi)
    a0 = 1j * s * nu0 - kq * nu0 * nu0
    b = 1j * s * c6 - 2.0 * kq * nu0 * c6
    c_quad = -kq * c6 * c6

    if method == "gaussian":
        a2 = c4 - c_quad
        val = complex(np.exp(a0 + b * b / (4 * a2)) * math.sqrt(c4 / a2))
        return (val, (0, 0)) if full_output else val

    if bounds is None:
        bounds = (default_bounds(phi, s_phi), default_bounds(th, s_th))
    (p_lo, p_hi), (t_lo, t_hi) = bounds
    lo, hi = p_lo - phi, p_hi - phi
    r2 = 1.0 / (math.sqrt(2.0) * s_th)                                  # √C2
    shift = 1j * c * nu0 / (2.0 * r2)
    slope = 1j * c * c6 / (2.0 * r2)
    a_1 = r2 * (th - t_lo) + shift
    a_2 = r2 * (th - t_hi) + shift

    fixed = policy.taylor_orders
    l3, l4 = fixed if fixed is not None else (8, 8)
    while True:
        e = _exp_quadratic_coeffs(b, c_quad, l3)
        f = _erf_coeffs(a_1, slope, l4) - _erf_coeffs(a_2, slope, l4)
        g = _gauss_power_integrals(c4, lo, hi, l3 + l4)
        terms = np.outer(e, f) * g[np.add.outer(np.arange(l3 + 1), np.arange(l4 + 1))]
        total = terms.sum()
        if fixed is not None:
            break
        edge = abs(terms[-1, :].sum()) + abs(terms[:, -1].sum())
        if edge <= policy.abs_tol * max(abs(total), 1e-300):
            break
        if l3 + l4 >= 400:
            raise SeriesConvergenceError(f"E3 series did not converge by orders ({l3}, {l4})")
        l3, l4 = 2 * l3, 2 * l4
    # prefactor √π C1/(2√C2) · C3 = 1/(2√(2π) σ_φ)
    val = complex(total * np.exp(a0) / (2.0 * math.sqrt(2.0 * math.pi) * s_phi))
    return (val, (l3, l4)) if full_output else val


def e3_table(errors: AngleErrorModel, array: ArrayConfig, max_m: int, max_n: int,
             policy: SeriesPolicy = DEFAULT_POLICY, method: str = "series") -> np.ndarray:
    """E3 on the offset lattice 𝓜 ∈ [−max_m, max_m], 𝓝 ∈ [−max_n, max_n].

    Index [𝓜 + max_m, 𝓝 + max_n]. Negative offsets reuse the conjugate of the
    mirrored entry, since the phase flips sign.
    """
    out = np.empty((2 * max_m + 1, 2 * max_n + 1), dtype=complex)
    for mi in range(-max_m, max_m + 1):
        for ni in range(-max_n, max_n + 1):
            if (mi, ni) < (0, 0):
                continue
            v = expectation_E3(mi, ni, errors, array, policy=policy, method=method)
            out[mi + max_m, ni + max_n] = v
            out[-mi + max_m, -ni + max_n] = np.conj(v)
    return out
