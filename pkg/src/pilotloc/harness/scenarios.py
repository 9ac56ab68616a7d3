"""Registered figure scenarios.

Each scenario fixes the physical setup (array, drones, frame, defects) and the
default sweep. Drones are numbered 1..3 as in the simulation table:
(20°, 20°, 2 kHz), (40°, 40°, 4 kHz), (60°, 60°, 6 kHz), all at 100 m unless a
variant moves them. Variants are named overrides (defect cases, range cases)
that become separate output series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..locate.grid import GridSpec
from ..scene import ArrayConfig, DroneTruth, FrameConfig, GainPhaseModel, NoiseModel, SceneConfig

__all__ = ["DRONE_TABLE", "Variant", "Scenario", "SCENARIOS", "get_scenario", "scenario_names",
           "DLDD_ESTIMATORS", "JLDD_ESTIMATORS", "SWEEP_VARIABLES"]

# (azimuth deg, elevation deg, Doppler Hz)
DRONE_TABLE = {1: (20.0, 20.0, 2000.0), 2: (40.0, 40.0, 4000.0), 3: (60.0, 60.0, 6000.0)}

DLDD_ESTIMATORS = ("mle", "aoml", "music")
JLDD_ESTIMATORS = ("mle-mle", "music-mle")
SWEEP_VARIABLES = ("snr_db", "power_coefficient", "window_length", "pilots")

WAVELENGTH_M = 1.6e-3
SAMPLING_HZ = 100e3
SYMBOLS_PER_SUBFRAME = 100


@dataclass(frozen=True)
class Variant:
    """Named override of the base scenario; ``None`` fields keep the base value."""

    name: str
    error: GainPhaseModel | None = None
    ranges_m: tuple | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    array_size: tuple[int, int]
    drones: tuple[int, ...]
    n_pilots: int
    error: GainPhaseModel
    sweep_variable: str
    sweep_values: tuple
    estimators: tuple[str, ...]
    snr_db: float = 10.0
    snr_reference: str = "received"
    psk_order: int = 16
    ranges_m: tuple | None = None
    power_coefficients: tuple | None = None
    variants: tuple[Variant, ...] = field(default_factory=lambda: (Variant("base"),))
    joint: bool = False
    grid: GridSpec = field(default_factory=lambda: GridSpec(azimuth_step=2.0, elevation_step=2.0,
                                                            doppler_step=500.0))

    @property
    def k(self) -> int:
        return len(self.drones)

    def variant(self, name: str) -> Variant:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(f"scenario {self.name} has no variant {name!r}")

    def build(self, variant: str | Variant = "base", snr_db: float | None = None,
              power_coefficient: float | None = None, n_pilots: int | None = None):
        """(scene, frame, error, noise) for one variant and sweep point.

        ``power_coefficient`` sets ϖ₁ for the first listed drone and splits
        the remainder evenly over the others; total transmit power is 1 W.
        """
        v = self.variant(variant) if isinstance(variant, str) else variant
        ranges = v.ranges_m or self.ranges_m or (100.0,) * self.k
        if power_coefficient is not None:
            if not 0.0 < power_coefficient < 1.0:
                raise ValueError("power_coefficient must lie in (0, 1)")
            rest = (1.0 - power_coefficient) / max(self.k - 1, 1)
            powers = (power_coefficient,) + (rest,) * (self.k - 1)
        else:
            powers = self.power_coefficients or (1.0 / self.k,) * self.k
        drones = []
        for idx, rng, pw in zip(self.drones, ranges, powers):
            az, el, fd = DRONE_TABLE[idx]
            drones.append(DroneTruth(math.radians(az), math.radians(el), fd,
                                     tx_power_w=pw, range_m=rng))
        array = ArrayConfig(*self.array_size, wavelength_m=WAVELENGTH_M)
        scene = SceneConfig(array, tuple(drones))
        n_sub = self.n_pilots if n_pilots is None else int(n_pilots)
        frame = FrameConfig(subframes=n_sub, symbols_per_subframe=SYMBOLS_PER_SUBFRAME,
                            sampling_hz=SAMPLING_HZ, psk_order=self.psk_order)
        noise = NoiseModel(snr_db=self.snr_db if snr_db is None else float(snr_db),
                           snr_reference=self.snr_reference)
        return scene, frame, v.error or self.error, noise


_ERR_BASE = GainPhaseModel.stochastic(1.0, 0.1, 700.0)

SCENARIOS = {
    "fig2": Scenario(
        "fig2", "Estimate distributions of one drone, 6x6 array, 10 pilots, 8 dB",
        (6, 6), (1,), 10, GainPhaseModel.stochastic(0.5, 1.0, 1000.0),
        "snr_db", (8.0,), ("mle",), snr_db=8.0),
    "fig3": Scenario(
        "fig3", "RMSE, CRLB and SDR for four gain-phase defect cases, drones 2 and 3, 8x8",
        (8, 8), (2, 3), 10, GainPhaseModel.stochastic(0.8, 0.09, 10.0),
        "snr_db", (0.0, 5.0, 10.0, 15.0, 20.0), ("mle",),
        variants=(Variant("large_gain", GainPhaseModel.stochastic(0.5, 0.1, 10.0)),
                  Variant("small_gain", GainPhaseModel.stochastic(1.15, 0.1, 10.0)),
                  Variant("large_phase", GainPhaseModel.stochastic(0.8, 0.09, 5.0)),
                  Variant("small_phase", GainPhaseModel.stochastic(0.8, 0.09, 10.0)))),
    "fig4": Scenario(
        "fig4", "Power allocation sweep at 12 dB for three range ratios, drones 1 and 3, 8x8",
        (8, 8), (1, 3), 5, _ERR_BASE,
        "power_coefficient", tuple(round(0.1 * i, 1) for i in range(1, 10)), ("mle",),
        snr_db=12.0, snr_reference="transmit",
        variants=(Variant("equal_range", ranges_m=(100.0, 100.0)),
                  Variant("half_range", ranges_m=(100.0, 50.0)),
                  Variant("fifth_range", ranges_m=(100.0, 20.0)))),
    "fig5": Scenario(
        "fig5", "Localisation/communication trade-off over SNR for MLE, AO-ML and MUSIC",
        (8, 8), (1, 3), 5, GainPhaseModel.stochastic(1.0, 0.1, 50.0),
        "snr_db", (5.0, 7.5, 10.0, 12.5, 15.0), ("mle", "aoml", "music")),
    "fig6": Scenario(
        "fig6", "AO-ML convergence with a single pilot, drones 2 and 3, 7x7, 20 dB",
        (7, 7), (2, 3), 1, _ERR_BASE, "snr_db", (20.0,), ("aoml",), snr_db=20.0),
    "fig7": Scenario(
        "fig7", "CRLB and SDR under larger defects (nu 0.5, kappa 5), drones 2 and 3, 7x7",
        (7, 7), (2, 3), 1, GainPhaseModel.stochastic(0.5, 0.1, 5.0),
        "snr_db", (0.0, 5.0, 10.0, 15.0, 20.0), ("mle",)),
    "fig8": Scenario(
        "fig8", "Joint localisation and detection over time windows, 16-PSK, no defects, 6x6",
        (6, 6), (2, 3), 1, GainPhaseModel.ideal(),
        "window_length", (2, 11, 51, 101), ("mle-mle", "music-mle", "aoml"),
        snr_db=8.0, joint=True),
    "fig9": Scenario(
        "fig9", "Joint localisation and detection at window 101 with small defects, 6x6",
        (6, 6), (2, 3), 1, GainPhaseModel.stochastic(1.0, 0.001, 1000.0),
        "window_length", (101,), ("mle-mle", "music-mle"),
        snr_db=8.0, joint=True),
}


def scenario_names() -> list[str]:
    return list(SCENARIOS)


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}") from None


def with_grid(scenario: Scenario, grid: GridSpec) -> Scenario:
    return replace(scenario, grid=grid)
