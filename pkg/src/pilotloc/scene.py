"""Scene description and received-signal synthesis for the drone uplink.

The base station carries an M×N uniform rectangular array. Each frame holds L
subframes of one unit pilot followed by T PSK data symbols. The per-subframe
model is

    y_{t,l} = Ã ω(l) s_{t,l} + n_{t,l},

with Ã the steering matrix perturbed by per-antenna gain α e^{jΔδ}, ω(l) the
diagonal path-loss × Doppler rotation and s_{t,l} = [√P_k s_{t,l,k}]_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArrayConfig",
    "DroneTruth",
    "SceneConfig",
    "GainPhaseModel",
    "FrameConfig",
    "NoiseModel",
    "ChannelRealization",
    "ReceivedFrame",
    "steering_vector",
    "steering_matrix",
    "psk_symbols",
    "sample_defects",
    "synthesize_frame",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayConfig:
    m_count: int
    n_count: int
    spacing_wavelengths: float = 0.5
    wavelength_m: float = 1.6e-3

    def __post_init__(self):
        if self.m_count < 1 or self.n_count < 1:
            raise ValueError("array needs m_count >= 1 and n_count >= 1")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be positive")
        if not self.wavelength_m > 0:
            raise ValueError("wavelength_m must be positive")

    @property
    def size(self) -> int:
        return self.m_count * self.n_count

    @property
    def spacing_m(self) -> float:
        return self.spacing_wavelengths * self.wavelength_m

    def indices(self):
        """Zero-based (m-1, n-1) index vectors in row-major order."""
        m, n = np.meshgrid(np.arange(self.m_count), np.arange(self.n_count), indexing="ij")
        return m.ravel(), n.ravel()


@dataclass(frozen=True)
class DroneTruth:
    azimuth_rad: float
    elevation_rad: float
    doppler_hz: float
    tx_power_w: float = 1.0
    range_m: float = 100.0
    velocity_mps: float | None = None

    def __post_init__(self):
        for name in ("azimuth_rad", "elevation_rad"):
            v = getattr(self, name)
            if not 0.0 < v < math.pi / 2:
                raise ValueError(f"{name} must lie in (0, pi/2), got {v}")
        if not math.isfinite(self.doppler_hz):
            raise ValueError("doppler_hz must be finite")
        if not self.tx_power_w > 0:
            raise ValueError("tx_power_w must be positive")
        if not self.range_m > 0:
            raise ValueError("range_m must be positive")

    def path_loss(self, wavelength_m: float) -> float:
        return wavelength_m / (4.0 * math.pi * self.range_m)

    def check_velocity(self, wavelength_m: float, rel_tol: float = 1e-2) -> None:
        """Validate f_D = v cosθ / λ when a velocity is attached."""
        if self.velocity_mps is None:
            return
        expected = self.velocity_mps * math.cos(self.elevation_rad) / wavelength_m
        if not math.isclose(expected, self.doppler_hz, rel_tol=rel_tol):
            raise ValueError(
                f"doppler_hz={self.doppler_hz} inconsistent with velocity "
                f"{self.velocity_mps} m/s (expected {expected:.1f} Hz)"
            )


@dataclass(frozen=True)
class SceneConfig:
    array: ArrayConfig
    drones: tuple[DroneTruth, ...]

    def __post_init__(self):
        object.__setattr__(self, "drones", tuple(self.drones))
        if len(self.drones) < 1:
            raise ValueError("scene needs at least one drone")
        if len(self.drones) > self.array.size:
            raise ValueError("more drones than array degrees of freedom (K > MN)")

    @property
    def k(self) -> int:
        return len(self.drones)

    @property
    def azimuths(self):
        return np.array([d.azimuth_rad for d in self.drones])

    @property
    def elevations(self):
        return np.array([d.elevation_rad for d in self.drones])

    @property
    def dopplers(self):
        return np.array([d.doppler_hz for d in self.drones])

    @property
    def powers(self):
        return np.array([d.tx_power_w for d in self.drones])

    @property
    def path_losses(self):
        return np.array([d.path_loss(self.array.wavelength_m) for d in self.drones])

    @property
    def amplitudes(self):
        """η_k √P_k per drone."""
        return self.path_losses * np.sqrt(self.powers)


@dataclass(frozen=True)
class GainPhaseModel:
    kind: str = "ideal"
    rician_location: float = 1.0
    rician_scale: float = 0.1
    vonmises_mean: float = 0.0
    vonmises_concentration: float = 1000.0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("ideal", "stochastic"):
            raise ValueError("kind must be 'ideal' or 'stochastic'")
        if kind == "stochastic":
            if self.rician_location < 0:
                raise ValueError("rician_location must be >= 0")
            if not self.rician_scale > 0:
                raise ValueError("rician_scale must be positive")
            if not self.vonmises_concentration > 0:
                raise ValueError("vonmises_concentration must be positive")

    @classmethod
    def ideal(cls):
        return cls("ideal")

    @classmethod
    def stochastic(cls, nu, sigma, kappa, mean=0.0):
        return cls("stochastic", nu, sigma, mean, kappa)

    @property
    def is_ideal(self) -> bool:
        return self.kind == "ideal"


@dataclass(frozen=True)
class FrameConfig:
    subframes: int = 10
    symbols_per_subframe: int = 100
    sampling_hz: float = 100e3
    psk_order: int = 16

    def __post_init__(self):
        if self.subframes < 1:
            raise ValueError("subframes must be >= 1")
        if self.symbols_per_subframe < 0:
            raise ValueError("symbols_per_subframe must be >= 0")
        if not self.sampling_hz > 0:
            raise ValueError("sampling_hz must be positive")
        if self.psk_order not in (2, 4, 8, 16):
            raise ValueError("psk_order must be one of 2, 4, 8, 16")

    @property
    def slots(self) -> int:
        return self.symbols_per_subframe + 1

    def doppler_phase(self, doppler_hz, subframe):
        """exp(j2π f_D l / f_s) for 1-based subframe index l (broadcasts)."""
        return np.exp(2j * np.pi * np.multiply.outer(np.asarray(doppler_hz, float),
                                                      np.asarray(subframe, float)) / self.sampling_hz)


@dataclass(frozen=True)
class NoiseModel:
    """AWGN per antenna, given either as a variance or as an SNR.

    With ``snr_db`` the variance is resolved against the scene. The default
    reference is the aggregate received power, σ² = Σ_k P_k η_k² / 10^{snr/10}.
    ``snr_reference="transmit"`` instead fixes σ² = (Σ_k P_k) η_ref² / 10^{snr/10}
    with η_ref the path loss at ``reference_range_m``, so that moving a drone
    closer raises its received SNR rather than the noise floor.
    """

    variance_per_antenna: float | None = None
    snr_db: float | None = None
    snr_reference: str = "received"
    reference_range_m: float = 100.0

    def __post_init__(self):
        if (self.variance_per_antenna is None) == (self.snr_db is None):
            raise ValueError("give exactly one of variance_per_antenna or snr_db")
        if self.variance_per_antenna is not None and self.variance_per_antenna < 0:
            raise ValueError("variance_per_antenna must be >= 0")
        if self.snr_reference not in ("received", "transmit"):
            raise ValueError("snr_reference must be 'received' or 'transmit'")

    def variance(self, scene: SceneConfig) -> float:
        if self.variance_per_antenna is not None:
            return float(self.variance_per_antenna)
        scale = 10.0 ** (self.snr_db / 10.0)
        if self.snr_reference == "received":
            return float(np.sum(scene.powers * scene.path_losses ** 2) / scale)
        eta_ref = scene.array.wavelength_m / (4.0 * math.pi * self.reference_range_m)
        return float(np.sum(scene.powers) * eta_ref ** 2 / scale)


@dataclass(frozen=True)
class ChannelRealization:
    steering_matrix: np.ndarray  # MN x K, error-free
    defect_gains: np.ndarray     # MN
    defect_phases: np.ndarray    # MN
    path_losses: np.ndarray      # K
    dopplers: np.ndarray         # K
    sampling_hz: float

    @property
    def defects(self) -> np.ndarray:
        return self.defect_gains * np.exp(1j * self.defect_phases)

    @property
    def perturbed_steering(self) -> np.ndarray:
        return self.defects[:, None] * self.steering_matrix

    def rotation(self, subframe: int) -> np.ndarray:
        """Diagonal of ω(l) for 1-based l: η_k e^{j2π f_k l/f_s}."""
        return self.path_losses * np.exp(2j * np.pi * self.dopplers * subframe / self.sampling_hz)

    def channel(self, subframe: int) -> np.ndarray:
        """h_k = η_k α e^{jΔδ} a_k e^{j2π f_k l/f_s} as MN x K columns."""
        return self.perturbed_steering * self.rotation(subframe)[None, :]


@dataclass(frozen=True)
class ReceivedFrame:
    samples: np.ndarray        # MN x (T+1) x L
    realization: ChannelRealization
    noise_draws: np.ndarray    # MN x (T+1) x L
    sent_symbols: np.ndarray   # K x T x L integer indices
    powers: np.ndarray         # K
    psk_order: int
    noise_variance: float

    def pilots(self, subframes=None) -> np.ndarray:
        """Pilot snapshots y_{0,l} as an MN x L' matrix."""
        p = self.samples[:, 0, :]
        return p if subframes is None else p[:, np.asarray(subframes) - 1]

    def stacked_pilots(self, n_pilots=None) -> np.ndarray:
        """ȳ = [y_{0,1}; …; y_{0,L}] stacked subframe-major."""
        p = self.samples[:, 0, :] if n_pilots is None else self.samples[:, 0, :n_pilots]
        return p.T.reshape(-1)


def steering_vector(array: ArrayConfig, azimuth_rad, elevation_rad) -> np.ndarray:
    """a_{m,n} = exp(-j2π[(m-1)d cosφ sinθ + (n-1)d sinφ sinθ]/λ), row-major in (m, n)."""
    return steering_matrix(array, np.atleast_1d(azimuth_rad), np.atleast_1d(elevation_rad))[:, 0]


def steering_matrix(array: ArrayConfig, azimuths, elevations) -> np.ndarray:
    """Steering vectors for paired angle arrays, one column per pair (MN x G)."""
    az = np.asarray(azimuths, dtype=float).ravel()
    el = np.asarray(elevations, dtype=float).ravel()
    k = 2.0 * np.pi * array.spacing_wavelengths
    u = np.cos(az) * np.sin(el)
    v = np.sin(az) * np.sin(el)
    # separable in (m, n): M + N exponentials per column instead of M·N
    pm = np.exp(-1j * k * np.outer(np.arange(array.m_count), u))
    qn = np.exp(-1j * k * np.outer(np.arange(array.n_count), v))
    return (pm[:, None, :] * qn[None, :, :]).reshape(array.size, -1)


def psk_symbols(indices, order: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.asarray(indices) / order)


def _draw_defects(model: GainPhaseModel, size: int, rng: np.random.Generator):
    if model.is_ideal:
        return np.ones(size), np.zeros(size)
    # Rician magnitude as |ν + σ(x + jy)|
    g = model.rician_location + model.rician_scale * (rng.standard_normal(size)
                                                      + 1j * rng.standard_normal(size))
    phase = rng.vonmises(model.vonmises_mean, model.vonmises_concentration, size)
    return np.abs(g), phase


def sample_defects(model: GainPhaseModel, array: ArrayConfig, seed):
    """Draw (α, Δδ) for every antenna; Ideal models give (1, 0) exactly."""
    return _draw_defects(model, array.size, np.random.default_rng(seed))


def synthesize_frame(scene: SceneConfig, frame: FrameConfig, error: GainPhaseModel,
                     noise: NoiseModel, seed, symbols=None) -> ReceivedFrame:
    """Generate one received frame with all random draws retained.

    Randomness comes from a single generator seeded by ``seed`` and is consumed
    in a fixed order: defects, data symbols, then standardised noise. Noise is
    drawn at unit variance and scaled afterwards, so frames that differ only in
    SNR share the same noise pattern.
    """
    array = scene.array
    rng = np.random.default_rng(seed)
    mn, k = array.size, scene.k
    t_data, n_sub = frame.symbols_per_subframe, frame.subframes
    for d in scene.drones:
        d.check_velocity(array.wavelength_m)

    alpha, dphase = _draw_defects(error, mn, rng)
    if symbols is None:
        sent = rng.integers(0, frame.psk_order, size=(k, t_data, n_sub))
    else:
        sent = np.asarray(symbols, dtype=int)
        if sent.shape != (k, t_data, n_sub):
            raise ValueError(f"symbols must have shape {(k, t_data, n_sub)}")
    std_noise = (rng.standard_normal((mn, t_data + 1, n_sub))
                 + 1j * rng.standard_normal((mn, t_data + 1, n_sub))) / math.sqrt(2.0)
    sigma2 = noise.variance(scene)
    noise_draws = math.sqrt(sigma2) * std_noise

    real = ChannelRealization(
        steering_matrix=steering_matrix(array, scene.azimuths, scene.elevations),
        defect_gains=alpha,
        defect_phases=dphase,
        path_losses=scene.path_losses,
        dopplers=scene.dopplers,
        sampling_hz=frame.sampling_hz,
    )
    # slot symbols: pilot index 0 (value 1) then data, shape K x (T+1) x L
    idx = np.concatenate([np.zeros((k, 1, n_sub), dtype=int), sent], axis=1)
    s = psk_symbols(idx, frame.psk_order) * np.sqrt(scene.powers)[:, None, None]
    samples = np.empty((mn, t_data + 1, n_sub), dtype=complex)
    for li in range(n_sub):
        h = real.channel(li + 1)
        samples[:, :, li] = h @ s[:, :, li]
    samples += noise_draws
    return ReceivedFrame(samples, real, noise_draws, sent, scene.powers, frame.psk_order, sigma2)
