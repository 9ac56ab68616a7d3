"""Average sum data rate of MRC decoding with estimated channels.

γ_k = γ_x / γ_y with γ_x = P_k|ĥ_kᴴh_k|² and γ_y = Σ_{p≠k} P_p|ĥ_kᴴh_p|² + |ĥ_kᴴn|².
The first-order rate is log₂(1 + E[γ_x]/E[γ_y]). The second-order rate expands
log₂(1+γ) about E[γ] and approximates E[γ], E[γ²] by second-order expansions
of the ratio about (E[γ_x], E[γ_y]), using the exact first and second moments
of γ_x and γ_y.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..locate.moments import PilotModel
from ..locate.params import ParamVector
from ..scene import FrameConfig, GainPhaseModel, SceneConfig
from ..specfun import DEFAULT_POLICY, SeriesPolicy
from .angle_expectation import AngleErrorModel, e3_table
from .channel_moments import channel_moment_2, channel_moment_4, noise_moments
from .fim import crlb_stddevs

__all__ = ["SdrMethod", "SdrPrediction", "sdr_predict", "rate_from_moments"]


class SdrMethod(str, enum.Enum):
    FIRST_ORDER = "first"
    SECOND_ORDER = "second"


@dataclass
class SdrPrediction:
    """Per-drone rates and every intermediate moment (arrays of length K)."""

    method: SdrMethod
    rates: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    cov_xy: np.ndarray
    mean_gamma: np.ndarray
    mean_gamma_sq: np.ndarray
    estimator_stddevs: np.ndarray       # K x 2, (σ_φ, σ_θ) in radians
    warnings: list = field(default_factory=list)

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))


def rate_from_moments(ex, ey, var_x, var_y, cov, method: SdrMethod):
    """(R, E[γ], E[γ²]) from the moments of numerator and denominator."""
    e_g = ex / ey - cov / ey ** 2 + var_y * ex / ey ** 3
    e_g2 = (ex ** 2 / ey ** 2 + var_x / ey ** 2 - 4 * ex * cov / ey ** 3
            + 3 * ex ** 2 * var_y / ey ** 4)
    if SdrMethod(method) is SdrMethod.FIRST_ORDER:
        rate = math.log2(1 + ex / ey)
    else:
        rate = math.log2(1 + e_g) - (e_g2 - e_g ** 2) / (2 * math.log(2) * (1 + e_g) ** 2)
    return rate, e_g, e_g2


def sdr_predict(scene: SceneConfig, error: GainPhaseModel, noise_variance: float,
                estimator_stddevs=None, method=SdrMethod.SECOND_ORDER,
                frame: FrameConfig | None = None, n_pilots: int | None = None,
                policy: SeriesPolicy = DEFAULT_POLICY, e3_method: str = "series",
                doppler_stddevs=None) -> SdrPrediction:
    """Analytic average rate per drone for one representative data slot.

    ``estimator_stddevs`` is a K x 2 array of (σ_φ, σ_θ) in radians; without it
    the CRLB of the stacked pilots (``frame`` and ``n_pilots`` required) is
    used. ``doppler_stddevs`` is accepted for symmetry with the estimator
    outputs and ignored: the Doppler error rotates ĥ by a common phase that
    cancels in every |·|².
    """
    method = SdrMethod(method)
    array = scene.array
    k_n = scene.k
    if estimator_stddevs is None:
        if frame is None:
            raise ValueError("frame is needed to source the stddevs from the CRLB")
        model = PilotModel.from_scene(scene, frame, error, noise_variance, n_pilots, policy)
        s_phi, s_th = crlb_stddevs(model, ParamVector.from_scene(scene))
        stds = np.column_stack([s_phi, s_th])
    else:
        stds = np.asarray(estimator_stddevs, dtype=float).reshape(k_n, 2)
    del doppler_stddevs

    powers, eta = scene.powers, scene.path_losses
    az, el = scene.azimuths, scene.elevations
    targets = [(az[q], el[q], eta[q]) for q in range(k_n)]
    p_noise, _, _ = noise_moments(array, noise_variance)
    out = {name: np.empty(k_n) for name in
           ("rates", "ex", "ey", "vx", "vy", "cov", "eg", "eg2")}
    warnings = []
    for k in range(k_n):
        errs = AngleErrorModel(az[k], el[k], stds[k, 0], stds[k, 1])
        e3 = e3_table(errs, array, 2 * (array.m_count - 1), 2 * (array.n_count - 1),
                      policy=policy, method=e3_method)
        m2 = [channel_moment_2(array, errs, *targets[q], error, policy, e3=e3)
              for q in range(k_n)]

        def m4(q1, q2):
            return channel_moment_4(array, errs, targets[q1], targets[q2], error, policy, e3=e3)

        others = [q for q in range(k_n) if q != k]
        ex = powers[k] * m2[k]
        ex2 = powers[k] ** 2 * m4(k, k)
        ey = sum(powers[q] * m2[q] for q in others) + p_noise
        interf = sum(powers[q] * m2[q] for q in others)
        ey2 = (sum(powers[q1] * powers[q2] * m4(q1, q2) for q1 in others for q2 in others)
               + 2 * p_noise * interf + 2 * p_noise ** 2)
        exy = sum(powers[k] * powers[q] * m4(k, q) for q in others) + p_noise * ex
        vx, vy, cov = ex2 - ex ** 2, ey2 - ey ** 2, exy - ex * ey
        for name, v, scale in (("var(γ_x)", vx, ex ** 2), ("var(γ_y)", vy, ey ** 2)):
            if v < -1e-9 * scale:
                warnings.append(f"drone {k}: negative {name} = {v:.3g}")
        rate, eg, eg2 = rate_from_moments(ex, ey, vx, vy, cov, method)
        if eg2 < eg ** 2 * (1 - 1e-12):
            warnings.append(f"drone {k}: approximated E[γ²] below E[γ]²")
        for name, v in zip(("rates", "ex", "ey", "vx", "vy", "cov", "eg", "eg2"),
                           (rate, ex, ey, vx, vy, cov, eg, eg2)):
            out[name][k] = v
    return SdrPrediction(method, out["rates"], out["ex"], out["ey"], out["vx"], out["vy"],
                         out["cov"], out["eg"], out["eg2"], stds, warnings)
