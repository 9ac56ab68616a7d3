"""Data detection with estimated channels: MRC, PSK decisions, SINR, SER and rate.

The receiver rebuilds each drone's channel as ĥ_k = a(φ̂_k, θ̂_k) e^{j2πf̂_k l/f_s},
without path loss or defect factors, and combines x_k = ĥ_kᴴ y.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .locate.moments import defect_stats
from .locate.params import ParamVector
from .scene import ArrayConfig, GainPhaseModel, ReceivedFrame, steering_matrix

__all__ = ["ChannelEstimate", "LinkMetrics", "mrc_combine", "detect_psk", "measure_link"]


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated channels from one parameter vector, or one per subframe."""

    array: ArrayConfig
    params: ParamVector | tuple
    sampling_hz: float

    def params_for(self, subframe: int) -> ParamVector:
        if isinstance(self.params, ParamVector):
            return self.params
        return self.params[subframe - 1]

    def vectors(self, subframe: int) -> np.ndarray:
        """Ĥ(l) as MN x K, unit-modulus entries."""
        p = self.params_for(subframe)
        a = steering_matrix(self.array, p.azimuths, p.elevations)
        return a * np.exp(2j * math.pi * p.dopplers * subframe / self.sampling_hz)[None, :]


@dataclass
class LinkMetrics:
    sinr: np.ndarray             # K x T x L instantaneous γ_k
    ser_per_drone: np.ndarray    # K
    rate_per_drone: np.ndarray   # K, mean log2(1 + γ_k)
    symbol_errors: np.ndarray    # K error counts
    symbols: int                 # symbols per drone

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rate_per_drone))

    @property
    def ser(self) -> float:
        return float(np.mean(self.ser_per_drone))


def mrc_combine(frame: ReceivedFrame, estimates: ChannelEstimate, subframe: int) -> np.ndarray:
    """x_{t,l} = Ĥ(l)ᴴ y_{t,l} for the T data slots of subframe l (K x T)."""
    h = estimates.vectors(subframe)
    return h.conj().T @ frame.samples[:, 1:, subframe - 1]


def detect_psk(combined, order: int, reference_phase: float = 0.0):
    """Nearest M-PSK index after removing ``reference_phase``; ties go to the lower index."""
    if order not in (2, 4, 8, 16):
        raise ValueError("order must be one of 2, 4, 8, 16")
    sector = 2 * math.pi / order
    theta = np.mod(np.angle(combined) - reference_phase, 2 * math.pi)
    idx = np.ceil(theta / sector - 0.5).astype(int)
    return np.mod(idx, order)


def _reference_phase(error: GainPhaseModel | None) -> float:
    if error is None:
        return 0.0
    return cmath.phase(defect_stats(error).coherent)


def measure_link(frame: ReceivedFrame, estimates: ChannelEstimate,
                 error: GainPhaseModel | None = None, noise_mode: str = "realized") -> LinkMetrics:
    """Instantaneous SINR of every data slot, SER and empirical rate.

    ``noise_mode="realized"`` uses |ĥ_kᴴn|² from the retained noise draw;
    ``"expected"`` replaces it by MN·σ². ``error`` supplies the coherent defect
    phase removed before PSK decisions.
    """
    if noise_mode not in ("realized", "expected"):
        raise ValueError("noise_mode must be 'realized' or 'expected'")
    real = frame.realization
    k, t_data, n_sub = frame.sent_symbols.shape
    mn = real.steering_matrix.shape[0]
    powers = np.asarray(frame.powers, dtype=float)
    sinr = np.empty((k, t_data, n_sub))
    errors = np.zeros(k, dtype=int)
    ref = _reference_phase(error)
    for li in range(n_sub):
        l = li + 1
        h_hat = estimates.vectors(l)                       # MN x K
        h = real.channel(l)                                # MN x K
        g = np.abs(h_hat.conj().T @ h) ** 2 * powers[None, :]   # [k, p] = P_p|ĥ_kᴴh_p|²
        signal = np.diag(g)
        interf = g.sum(axis=1) - signal
        if noise_mode == "realized":
            noise = np.abs(h_hat.conj().T @ frame.noise_draws[:, 1:, li]) ** 2   # K x T
        else:
            noise = np.full((k, t_data), mn * frame.noise_variance)
        with np.errstate(divide="ignore"):      # noiseless, interference-free link: γ = inf
            sinr[:, :, li] = signal[:, None] / (interf[:, None] + noise)
        x = h_hat.conj().T @ frame.samples[:, 1:, li]
        det = detect_psk(x, frame.psk_order, ref)
        errors += np.sum(det != frame.sent_symbols[:, :, li], axis=1)
    n_sym = t_data * n_sub
    ser = errors / n_sym if n_sym else np.zeros(k)
    rate = np.log2(1 + sinr).reshape(k, -1).mean(axis=1) if n_sym else np.zeros(k)
    return LinkMetrics(sinr, np.asarray(ser, float), rate, errors, n_sym)

