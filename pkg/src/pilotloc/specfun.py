"""Special functions and truncated series used by the closed-form expectations.

Covers the modified Bessel function of the first kind (ascending series in log
space), Rician raw moments, the von Mises characteristic function written as a
Bessel series, the complex error function and physicists' Hermite polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

__all__ = [
    "SeriesPolicy",
    "SeriesResult",
    "SeriesConvergenceError",
    "log_bessel_i",
    "bessel_i",
    "bessel_i_ratios",
    "rician_moment",
    "vonmises_char",
    "erf_complex",
    "hermite_poly",
    "DEFAULT_POLICY",
]


class SeriesConvergenceError(RuntimeError):
    """Raised when a truncated series exhausts ``max_terms`` before meeting ``abs_tol``."""


@dataclass(frozen=True)
class SeriesPolicy:
    """Truncation rule shared by every infinite sum in the package.

    A series stops once the magnitude of its edge terms, relative to the running
    sum, falls below ``abs_tol``. All series here are normalised (moments,
    Bessel ratios, probabilities), so relative and absolute tolerances coincide
    up to an O(1) factor; for unnormalised sums such as I_q(1000) the relative
    reading is the only meaningful one.

    ``max_terms`` caps the number of terms actually summed. The Poisson-like
    Rician series for σ_r = 0.001 peaks near b ≈ ν²/(2σ_r²) ≈ 5·10⁵ and needs
    about 12·√b terms around the peak, which is why the default is large.

    ``taylor_orders`` fixes (L1, L2) for the optional Taylor evaluation of the
    von Mises phase integral; ``None`` grows the orders until convergence.
    """

    abs_tol: float = 1e-12
    max_terms: int = 100_000
    taylor_orders: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_POLICY = SeriesPolicy()


@dataclass(frozen=True)
class SeriesResult:
    value: float | complex
    terms: int
    converged: bool
    reason: str


def _log_peak_sum(logterm, peak: float, policy: SeriesPolicy):
    """log Σ_b exp(logterm(b)) over b ≥ 0 for a unimodal positive-term series.

    The window is centred on ``peak`` and doubled until both edge terms are
    negligible relative to the sum, so huge or tiny magnitudes never overflow.
    Returns (log_sum, n_terms, converged, reason).
    """
    centre = max(0, int(math.floor(peak)))
    width = 32
    while True:
        lo = max(0, centre - width)
        hi = centre + width
        b = np.arange(lo, hi + 1, dtype=float)
        lt = logterm(b)
        m = float(np.max(lt))
        if not np.isfinite(m):
            return m, b.size, True, "degenerate"
        w = np.exp(lt - m)
        s = float(w.sum())
        left_ok = lo == 0 or w[0] / s < policy.abs_tol
        right_ok = w[-1] / s < policy.abs_tol and lt[-1] <= lt[-2]
        if left_ok and right_ok:
            return m + math.log(s), b.size, True, "tolerance"
        if b.size >= policy.max_terms:
            return m + math.log(s), b.size, False, "max_terms"
        width = min(2 * width, policy.max_terms // 2 + 1)


def _raise_or_return(result: SeriesResult, full_output: bool):
    if full_output:
        return result
    if not result.converged:
        raise SeriesConvergenceError(
            f"series stopped after {result.terms} terms ({result.reason}); "
            "increase SeriesPolicy.max_terms"
        )
    return result.value


def log_bessel_i(q: int, x: float, policy: SeriesPolicy = DEFAULT_POLICY, full_output=False):
    """Natural log of I_q(x) from the ascending series Σ (x/2)^{2b+q} / (b! Γ(b+q+1))."""
    if q < 0 or int(q) != q:
        raise ValueError("order q must be a non-negative integer")
    if x < 0:
        raise ValueError("x must be non-negative")
    q = int(q)
    if x == 0.0:
        res = SeriesResult(0.0 if q == 0 else -math.inf, 1, True, "exact")
        return _raise_or_return(res, full_output)
    lhx = math.log(x / 2.0)

    def logterm(b):
        return (2 * b + q) * lhx - special.gammaln(b + 1) - special.gammaln(b + q + 1)

    # term ratio (x/2)^2 / ((b+1)(b+q+1)) crosses 1 here
    peak = 0.5 * (-(q + 2) + math.sqrt(q * q + x * x))
    val, n, ok, why = _log_peak_sum(logterm, peak, policy)
    return _raise_or_return(SeriesResult(val, n, ok, why), full_output)


def bessel_i(q: int, x: float, policy: SeriesPolicy = DEFAULT_POLICY, full_output=False):
    """Modified Bessel function of the first kind I_q(x) for integer q ≥ 0.

    Summed in log space so intermediate terms never overflow; the returned value
    itself is inf once I_q(x) exceeds the float range (x ≳ 713). Use
    :func:`log_bessel_i` or :func:`bessel_i_ratios` there.
    """
    res = log_bessel_i(q, x, policy, full_output=True)
    with np.errstate(over="ignore"):
        value = float(np.exp(res.value))
    return _raise_or_return(SeriesResult(value, res.terms, res.converged, res.reason), full_output)


@lru_cache(maxsize=256)
def _ratio_table(x: float, tol: float, max_terms: int):
    # Exponent-scaled Bessel values; ratios I_q/I_0 are scale-free.
    i0 = special.ive(0, x)
    qs = [0]
    chunk = max(64, int(4 * math.sqrt(max(x, 1.0))))
    ratios = [1.0]
    start = 1
    while True:
        q = np.arange(start, start + chunk)
        r = special.ive(q, x) / i0
        small = np.nonzero(r < tol)[0]
        if small.size:
            ratios.extend(r[: small[0]].tolist())
            qs.extend(q[: small[0]].tolist())
            return np.asarray(ratios), True
        ratios.extend(r.tolist())
        qs.extend(q.tolist())
        start += chunk
        if len(ratios) > max_terms:
            return np.asarray(ratios[: max_terms + 1]), False


def bessel_i_ratios(x: float, policy: SeriesPolicy = DEFAULT_POLICY):
    """Ratios I_q(x)/I_0(x) for q = 0, 1, ... up to the first one below ``abs_tol``.

    Evaluated from exponent-scaled Bessel values so that concentrations far
    beyond the float range of I_0 (k̃ = 10³ … 10⁸) stay finite.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    ratios, ok = _ratio_table(float(x), policy.abs_tol, policy.max_terms)
    if not ok:
        raise SeriesConvergenceError(
            f"Bessel ratio series did not drop below {policy.abs_tol} within "
            f"{policy.max_terms} orders (x={x})"
        )
    return ratios


def rician_moment(c: int, nu: float, sigma: float, policy: SeriesPolicy = DEFAULT_POLICY,
                  full_output=False):
    """Raw moment E[α^c] of a Rician(ν, σ_r) variable.

    Series: e^{-x} Σ_b x^b (2σ²)^{c/2} Γ(b + 1 + c/2) / (b!)², with x = ν²/(2σ²),
    i.e. a Poisson(x)-weighted sum of Γ(b+1+c/2)/b! (2σ²)^{c/2}. Terms are
    handled through log-gamma and summed around the Poisson mode.
    """
    if c < 0 or int(c) != c:
        raise ValueError("moment order c must be a non-negative integer")
    if not sigma > 0:
        raise ValueError("rician scale sigma must be positive")
    if nu < 0:
        raise ValueError("rician location nu must be non-negative")
    c = int(c)
    if c == 0:
        return _raise_or_return(SeriesResult(1.0, 1, True, "exact"), full_output)
    two_s2 = 2.0 * sigma * sigma
    x = nu * nu / two_s2
    half_c = 0.5 * c
    log_scale = half_c * math.log(two_s2)
    if x == 0.0:
        val = math.exp(log_scale + special.gammaln(1 + half_c))
        return _raise_or_return(SeriesResult(val, 1, True, "exact"), full_output)
    lx = math.log(x)

    def logterm(b):
        return (-x + b * lx + special.gammaln(b + 1 + half_c)
                - 2.0 * special.gammaln(b + 1) + log_scale)

    val, n, ok, why = _log_peak_sum(logterm, x, policy)
    return _raise_or_return(SeriesResult(math.exp(val), n, ok, why), full_output)


def _interval_exp(omega, a: float, b: float):
    """∫_a^b e^{jωt} dt, vectorised over ω, exact at ω = 0."""
    omega = np.asarray(omega, dtype=float)
    out = np.empty(omega.shape, dtype=complex)
    zero = np.abs(omega) < 1e-300
    w = omega[~zero]
    out[~zero] = (np.exp(1j * w * b) - np.exp(1j * w * a)) / (1j * w)
    out[zero] = b - a
    return out


def _taylor_i3(c_signed: float, q: int, a: float, b: float, policy: SeriesPolicy):
    """∫_a^b e^{jCt} cos(qt) dt from the product of the two Taylor expansions.

    Alternating terms grow like e^{(|C|+q)·max(|a|,|b|)} before cancelling, so
    the sum is carried out in mpmath at a precision sized to that growth.
    """
    import mpmath as mp

    reach = max(abs(a), abs(b))
    growth_digits = (abs(c_signed) + q) * reach / math.log(10.0)
    tol_digits = -math.log10(policy.abs_tol)
    with mp.workdps(int(25 + growth_digits + tol_digits)):
        ma, mb = mp.mpf(a), mp.mpf(b)
        jc = mp.mpc(0, c_signed)
        if policy.taylor_orders is not None:
            l1_max, l2_max = policy.taylor_orders
        else:
            # smallest orders whose last terms are below tolerance at the bound
            l1_max = _taylor_order(abs(c_signed) * reach, policy)
            l2_max = _taylor_order(q * reach, policy) // 2 + 1
        e_coef = [jc ** l1 / mp.factorial(l1) for l1 in range(l1_max + 1)]
        c_coef = [(-1) ** l2 * mp.mpf(q) ** (2 * l2) / mp.factorial(2 * l2) for l2 in range(l2_max + 1)]
        total = mp.mpc(0)
        for l1, ec in enumerate(e_coef):
            for l2, cc in enumerate(c_coef):
                p = l1 + 2 * l2 + 1
                total += ec * cc * (mb ** p - ma ** p) / p
        return complex(total)


def _taylor_order(z: float, policy: SeriesPolicy) -> int:
    n, term = 0, 1.0
    # z^n/n! must have peaked and fallen below tolerance
    while not (n > z and term < policy.abs_tol * 1e-3):
        n += 1
        term *= z / n
        if n > policy.max_terms:
            raise SeriesConvergenceError("Taylor order for the phase integral exceeds max_terms")
    return n


def vonmises_char(c_mult: float, sign: int, mean: float, concentration: float,
                  bounds: tuple[float, float] = (-math.pi, math.pi),
                  policy: SeriesPolicy = DEFAULT_POLICY, method: str = "exact"):
    """E[exp(±jCΔδ)] for Δδ ~ von Mises(μ̃, k̃) integrated over ``bounds``.

    The density is expanded as (1/2π)(1 + (2/I_0(k̃)) Σ_q I_q(k̃) cos(q(Δδ − μ̃))),
    giving I₂ + (1/(π I_0)) Σ_q I_q ∫ e^{±jCΔδ} cos(q(Δδ−μ̃)) dΔδ. The q-sum stops
    when I_q/I_0 < ``policy.abs_tol``.

    ``method="exact"`` integrates each trigonometric term through its
    antiderivative. ``method="taylor"`` expands e^{±jCΔδ} and cos(qΔδ) in Taylor
    series (orders from ``policy.taylor_orders``) and integrates the polynomial;
    it needs extended precision and supports μ̃ = 0 only.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not concentration > 0:
        raise ValueError("von Mises concentration must be positive")
    a, b = float(bounds[0]), float(bounds[1])
    if a < -math.pi - 1e-12 or b > math.pi + 1e-12 or not a < b:
        raise ValueError("phase bounds must satisfy -pi <= min < max <= pi")
    if c_mult == 0:
        # the truncated PDF mass; exactly 1 on the full circle
        if a <= -math.pi + 1e-12 and b >= math.pi - 1e-12:
            return 1.0 + 0j
    w = sign * float(c_mult)
    ratios = bessel_i_ratios(concentration, policy)
    q = np.arange(1, ratios.size)
    i2 = _interval_exp(np.array([w]), a, b)[0] / (2.0 * math.pi)
    if method == "exact":
        i3 = 0.5 * (np.exp(-1j * q * mean) * _interval_exp(w + q, a, b)
                    + np.exp(1j * q * mean) * _interval_exp(w - q, a, b))
    elif method == "taylor":
        if mean != 0:
            raise NotImplementedError("Taylor evaluation assumes a zero von Mises mean")
        i3 = np.array([_taylor_i3(w, int(qq), a, b, policy) for qq in q])
    else:
        raise ValueError(f"unknown method {method!r}")
    return complex(i2 + np.sum(ratios[1:] * i3) / math.pi)


def erf_complex(z):
    """Error function for complex arguments (Faddeeva-based, via scipy)."""
    return special.erf(np.asarray(z, dtype=complex))[()]


def hermite_poly(order: int, x, max_order: int = 20):
    """Physicists' Hermite polynomial H_n(x) by the three-term recurrence."""
    if order < 0 or int(order) != order:
        raise ValueError("order must be a non-negative integer")
    if order > max_order:
        raise ValueError(f"order {order} exceeds configured maximum {max_order}")
    x = np.asarray(x, dtype=complex)
    h_prev = np.ones_like(x)
    if order == 0:
        return h_prev[()]
    h = 2 * x
    for n in range(1, order):
        h_prev, h = h, 2 * x * h - 2 * n * h_prev
    return h[()]
