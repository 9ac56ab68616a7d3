"""Fisher information of the stacked pilots and the resulting CRLB.

Observations are Gaussian with mean μ(β) and covariance Γ. Only the mean
derivatives are kept, F_ij = 2 Re(∂μᴴ/∂β_i Γ⁻¹ ∂μ/∂β_j). The mean of antenna
(m, n) in subframe l is c η_k √P_k a_mn(φ_k, θ_k) e^{j2πf_k l/f_s} summed over
drones, with c = E[α]E[e^{jΔδ}], so

    ∂μ/∂φ_k = c η_k √P_k (Φ ∘ a_k) e^{jω_k l},   Φ_mn = −j2π[−(m−1)d sinφ + (n−1)d cosφ] sinθ/λ
    ∂μ/∂θ_k = c η_k √P_k (Θ ∘ a_k) e^{jω_k l},   Θ_mn = −j2π[(m−1)d cosφ + (n−1)d sinφ] cosθ/λ
    ∂μ/∂f_k = (j2πl/f_s) μ_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..locate.moments import PilotModel
from ..locate.params import ParamVector
from ..scene import steering_matrix

__all__ = ["FimResult", "fim", "mean_jacobian", "crlb_stddevs"]

_COND_LIMIT = 1e12


@dataclass
class FimResult:
    """F and diag(F⁻¹) with parameter order (φ_1..φ_K, θ_1..θ_K, f_1..f_K)."""

    fim: np.ndarray
    crlb_diag: np.ndarray
    condition: float
    ill_conditioned: bool
    singular: bool
    ridge: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.fim.shape[0] // 3

    def stddevs(self):
        """(σ_φ, σ_θ, σ_f) arrays of length K from the CRLB diagonal."""
        s = np.sqrt(np.maximum(self.crlb_diag, 0.0))
        k = self.k
        return s[:k], s[k:2 * k], s[2 * k:]


def mean_jacobian(model: PilotModel, params: ParamVector) -> np.ndarray:
    """∂μ/∂β as an (MN·L) x 3K complex matrix, subframe-major rows."""
    arr = model.array
    m, n = arr.indices()
    kd = 2.0 * math.pi * arr.spacing_wavelengths                  # 2π d/λ
    a = steering_matrix(arr, params.azimuths, params.elevations)   # MN x K
    ls = model.subframe_index.astype(float)
    rot = model.frame.doppler_phase(params.dopplers, ls)          # K x L
    g = model.gains                                               # c η √P
    az, el = params.azimuths, params.elevations
    dphi = -1j * kd * (-np.outer(m, np.sin(az)) + np.outer(n, np.cos(az))) * np.sin(el)
    dth = -1j * kd * (np.outer(m, np.cos(az)) + np.outer(n, np.sin(az))) * np.cos(el)
    k = params.k
    mn, n_l = arr.size, ls.size
    jac = np.empty((n_l, mn, 3 * k), dtype=complex)
    base = a * g[None, :]                                          # MN x K
    for q in range(k):
        t = np.outer(rot[q], base[:, q])                           # L x MN
        jac[:, :, q] = t * dphi[:, q][None, :]
        jac[:, :, k + q] = t * dth[:, q][None, :]
        jac[:, :, 2 * k + q] = t * (2j * math.pi * ls / model.frame.sampling_hz)[:, None]
    return jac.reshape(n_l * mn, 3 * k)


def fim(model: PilotModel, params: ParamVector) -> FimResult:
    """Fisher information and CRLB diagonal at the true parameters.

    Γ gets a ridge of 1e-12·tr(Γ)/(MNL) when its condition number exceeds
    1e12. Conditioning of F is judged after scaling to unit diagonal, so that
    the mix of radians and hertz does not trigger the flag by itself.
    """
    jac = mean_jacobian(model, params)
    gam = model.covariance(params)
    size = gam.shape[0]
    tr = float(np.trace(gam).real)
    if not tr > 0:
        raise ValueError("covariance is zero: need noise or random defects")
    ridge = 0.0
    notes = []
    if np.linalg.cond(gam) > _COND_LIMIT:
        ridge = 1e-12 * tr / size
        gam = gam + ridge * np.eye(size)
        notes.append(f"covariance regularised with ridge {ridge:.3g}")
    f = 2.0 * np.real(jac.conj().T @ np.linalg.solve(gam, jac))
    f = 0.5 * (f + f.T)
    d = np.sqrt(np.clip(np.diag(f), 0.0, None))
    singular = bool(np.any(d == 0))
    if singular:
        cond = math.inf
    else:
        cond = float(np.linalg.cond(f / np.outer(d, d)))
        singular = not np.isfinite(cond) or cond > 1e15
    ill = singular or cond > _COND_LIMIT
    if singular:
        notes.append("Fisher information is singular: parameters not identifiable")
        crlb = np.full(f.shape[0], np.inf)
    else:
        inv = np.linalg.inv(f / np.outer(d, d)) / np.outer(d, d)
        crlb = np.diag(inv).copy()
        if ill:
            notes.append(f"Fisher information ill-conditioned (cond {cond:.3g})")
    return FimResult(f, crlb, cond, ill, singular, ridge, notes)


def crlb_stddevs(model: PilotModel, params: ParamVector):
    """Per-drone (σ_φ, σ_θ) in radians from the CRLB diagonal."""
    res = fim(model, params)
    s_phi, s_th, _ = res.stddevs()
    return s_phi, s_th
