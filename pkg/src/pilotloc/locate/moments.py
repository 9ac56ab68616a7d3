"""Mean and covariance of the stacked pilot observations.

With defects averaged out, the pilot of subframe l at antenna (m, n) has mean

    μ_{mnl} = Q_{mnl} E[α] E[e^{jΔδ}],   Q_{mnl} = Σ_k η_k √P_k a_{mn}(φ_k, θ_k) e^{j2π f_k l/f_s}.

Defects are fixed over a frame and independent across antennas, so the
covariance couples subframes of the same antenna only:

    Γ_{(i,l1),(i',l2)} = δ_{ii'} (E[α²] − |E[α]E[e^{jΔδ}]|²) Q_{i l1} Q*_{i l2} + σ² δ_{ii'} δ_{l1 l2}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..scene import ArrayConfig, FrameConfig, GainPhaseModel, SceneConfig, steering_matrix
from ..specfun import DEFAULT_POLICY, SeriesPolicy, rician_moment, vonmises_char
from .params import ParamVector

__all__ = ["DefectStats", "defect_stats", "MomentModel", "PilotModel", "build_moments"]


@dataclass(frozen=True)
class DefectStats:
    mean_gain: float        # E[α]
    second_gain: float      # E[α²]
    mean_phasor: complex    # E[e^{jΔδ}]

    @property
    def coherent(self) -> complex:
        """E[α e^{jΔδ}], the factor scaling every mean template."""
        return self.mean_gain * self.mean_phasor

    @property
    def excess(self) -> float:
        """Per-antenna defect variance E[α²] − |E[α e^{jΔδ}]|²."""
        return float(self.second_gain - abs(self.coherent) ** 2)


@lru_cache(maxsize=64)
def defect_stats(model: GainPhaseModel, policy: SeriesPolicy = DEFAULT_POLICY) -> DefectStats:
    if model.is_ideal:
        return DefectStats(1.0, 1.0, 1.0 + 0j)
    e1 = rician_moment(1, model.rician_location, model.rician_scale, policy)
    e2 = rician_moment(2, model.rician_location, model.rician_scale, policy)
    ph = vonmises_char(1, 1, model.vonmises_mean, model.vonmises_concentration, policy=policy)
    return DefectStats(e1, e2, ph)


@dataclass(frozen=True)
class MomentModel:
    mean_vector: np.ndarray   # MNL, subframe-major stacking
    covariance: np.ndarray    # MNL x MNL


@dataclass(frozen=True)
class PilotModel:
    """Everything the estimators know besides the observations.

    ``amplitudes`` are η_k √P_k per drone label; ``n_pilots`` is the number of
    consecutive subframes whose pilots are stacked into ȳ, starting at
    subframe ``first_subframe`` (1-based).
    """

    array: ArrayConfig
    frame: FrameConfig
    amplitudes: np.ndarray
    defects: DefectStats
    noise_variance: float = 0.0
    n_pilots: int | None = None
    first_subframe: int = 1

    @classmethod
    def from_scene(cls, scene: SceneConfig, frame: FrameConfig, error: GainPhaseModel,
                   noise_variance: float = 0.0, n_pilots=None, policy=DEFAULT_POLICY):
        return cls(scene.array, frame, scene.amplitudes, defect_stats(error, policy),
                   noise_variance, n_pilots)

    @property
    def k(self) -> int:
        return len(self.amplitudes)

    @property
    def pilots(self) -> int:
        return self.frame.subframes if self.n_pilots is None else self.n_pilots

    @property
    def subframe_index(self) -> np.ndarray:
        return np.arange(self.first_subframe, self.first_subframe + self.pilots)

    @property
    def gains(self) -> np.ndarray:
        """Complex template gain per drone: E[α e^{jΔδ}] η_k √P_k."""
        return self.defects.coherent * np.asarray(self.amplitudes)

    def response(self, params: ParamVector) -> np.ndarray:
        """Q as an MN x L matrix (no defect factor)."""
        a = steering_matrix(self.array, params.azimuths, params.elevations)
        rot = self.frame.doppler_phase(params.dopplers, self.subframe_index)   # K x L
        return a @ (np.asarray(self.amplitudes)[:, None] * rot)

    def drone_template(self, params: ParamVector, k: int) -> np.ndarray:
        """Expected pilot matrix (MN x L) contributed by drone k."""
        a = steering_matrix(self.array, params.azimuths[k:k + 1], params.elevations[k:k + 1])
        rot = self.frame.doppler_phase(params.dopplers[k:k + 1], self.subframe_index)
        return self.gains[k] * (a @ rot)

    def mean_matrix(self, params: ParamVector) -> np.ndarray:
        return self.defects.coherent * self.response(params)

    def mean(self, params: ParamVector) -> np.ndarray:
        return self.mean_matrix(params).T.reshape(-1)

    def objective(self, observations: np.ndarray, params: ParamVector) -> float:
        """Unweighted ‖ȳ − μ(β)‖²."""
        r = _as_matrix(observations, self) - self.mean_matrix(params)
        return float(np.vdot(r, r).real)

    def weighted_objective(self, observations: np.ndarray, params: ParamVector) -> float:
        """Gaussian negative log-likelihood (ȳ−μ)ᴴΓ⁻¹(ȳ−μ) + log det Γ.

        Γ is block diagonal per antenna with blocks σ²I + v q qᴴ, so the
        Sherman–Morrison form is used instead of a dense solve.
        """
        s2 = self.noise_variance
        if not s2 > 0:
            raise ValueError("weighted objective needs a positive noise variance")
        v = self.defects.excess
        q = self.response(params)                 # MN x L
        r = _as_matrix(observations, self) - self.defects.coherent * q
        qn = np.sum(np.abs(q) ** 2, axis=1)
        qr = np.sum(q.conj() * r, axis=1)
        quad = (np.sum(np.abs(r) ** 2) - np.sum(v * np.abs(qr) ** 2 / (s2 + v * qn))) / s2
        logdet = r.size * np.log(s2) + np.sum(np.log1p(v * qn / s2))
        return float(quad + logdet)

    def gls_objective(self, observations: np.ndarray, params: ParamVector,
                      anchor: ParamVector) -> float:
        """(ȳ−μ(β))ᴴ Γ(β₀)⁻¹ (ȳ−μ(β)) with the covariance frozen at ``anchor`` = β₀."""
        s2 = self.noise_variance
        if not s2 > 0:
            raise ValueError("GLS objective needs a positive noise variance")
        v = self.defects.excess
        qa = self.response(anchor)
        r = _as_matrix(observations, self) - self.defects.coherent * self.response(params)
        w = v / (s2 + v * np.sum(np.abs(qa) ** 2, axis=1))
        qr = np.sum(qa.conj() * r, axis=1)
        return float((np.sum(np.abs(r) ** 2) - np.sum(w * np.abs(qr) ** 2)) / s2)

    def covariance(self, params: ParamVector) -> np.ndarray:
        q = self.response(params)                 # MN x L
        mn, n_l = q.shape
        v = self.defects.excess
        gam = np.zeros((n_l * mn, n_l * mn), dtype=complex)
        idx = np.arange(mn)
        for l1 in range(n_l):
            for l2 in range(n_l):
                gam[l1 * mn + idx, l2 * mn + idx] = v * q[:, l1] * q[:, l2].conj()
        gam[np.diag_indices_from(gam)] += self.noise_variance
        return gam


def _as_matrix(observations, model: PilotModel) -> np.ndarray:
    obs = np.asarray(observations)
    if obs.ndim == 1:
        n_l = model.pilots
        if obs.size != n_l * model.array.size:
            raise ValueError(f"observations must have length MN*L = {n_l * model.array.size}")
        return obs.reshape(n_l, model.array.size).T
    return obs


def build_moments(params: ParamVector, model: PilotModel) -> MomentModel:
    """μ and Γ of the stacked pilots ȳ at hypothesis ``params``."""
    if params.k > model.array.size:
        raise ValueError("K must not exceed MN")
    return MomentModel(model.mean(params), model.covariance(params))
