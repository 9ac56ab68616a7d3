from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DOPPLER_UNIT_HZ = 100.0


@dataclass(eq=False)
class ParamVector:
    """β = [φᵀ, θᵀ, f_Dᵀ]ᵀ for K drones (angles in radians, Doppler in Hz).

    ``info`` carries estimator diagnostics (objective, flags, traces) and is
    ignored by comparisons.
    """

    azimuths: np.ndarray
    elevations: np.ndarray
    dopplers: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.azimuths = np.atleast_1d(np.asarray(self.azimuths, dtype=float)).copy()
        self.elevations = np.atleast_1d(np.asarray(self.elevations, dtype=float)).copy()
        self.dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=float)).copy()
        if not (self.azimuths.size == self.elevations.size == self.dopplers.size):
            raise ValueError("azimuths, elevations and dopplers need equal length")
        if not (np.all(np.isfinite(self.azimuths)) and np.all(np.isfinite(self.elevations))
                and np.all(np.isfinite(self.dopplers))):
            raise ValueError("parameters must be finite")

    @property
    def k(self) -> int:
        return self.azimuths.size

    @classmethod
    def from_scene(cls, scene):
        return cls(scene.azimuths, scene.elevations, scene.dopplers)

    @classmethod
    def from_degrees(cls, az_deg, el_deg, dopplers):
        return cls(np.radians(az_deg), np.radians(el_deg), dopplers)

    def copy(self) -> "ParamVector":
        return ParamVector(self.azimuths, self.elevations, self.dopplers, dict(self.info))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.azimuths, self.elevations, self.dopplers])

    def normalized(self) -> np.ndarray:
        """Angles in degrees and Doppler in units of 100 Hz, for convergence tests."""
        return np.concatenate([np.degrees(self.azimuths), np.degrees(self.elevations),
                               self.dopplers / DOPPLER_UNIT_HZ])

    def permuted(self, perm) -> "ParamVector":
        perm = list(perm)
        return ParamVector(self.azimuths[perm], self.elevations[perm], self.dopplers[perm],
                           dict(self.info))

    def drone(self, k: int):
        return self.azimuths[k], self.elevations[k], self.dopplers[k]

    def with_drone(self, k: int, az=None, el=None, fd=None) -> "ParamVector":
        out = self.copy()
        if az is not None:
            out.azimuths[k] = az
        if el is not None:
            out.elevations[k] = el
        if fd is not None:
            out.dopplers[k] = fd
        return out

    def same_as(self, other: "ParamVector") -> bool:
        return (np.array_equal(self.azimuths, other.azimuths)
                and np.array_equal(self.elevations, other.elevations)
                and np.array_equal(self.dopplers, other.dopplers))

    def distance(self, other: "ParamVector") -> float:
        return float(np.linalg.norm(self.normalized() - other.normalized()))

    def __repr__(self):
        az = ", ".join(f"{math.degrees(a):.4f}" for a in self.azimuths)
        el = ", ".join(f"{math.degrees(a):.4f}" for a in self.elevations)
        fd = ", ".join(f"{f:.1f}" for f in self.dopplers)
        return f"ParamVector(az_deg=[{az}], el_deg=[{el}], fd_hz=[{fd}])"
