"""State containers for the kinetic and diffusion solvers.

All states are plain arrays plus clocks; solvers treat them as immutable
inputs and return fresh instances, so independent runs can share them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class SurfaceDistribution:
    """Molecule density per unit wall length on the (x, v, e) grid."""

    values: np.ndarray      # (nx, nv, ne)
    time: float = 0.0
    steps: int = 0

    def advanced(self, values: np.ndarray, dt: float) -> "SurfaceDistribution":
        return replace(self, values=values, time=self.time + dt, steps=self.steps + 1)

    def with_values(self, values: np.ndarray) -> "SurfaceDistribution":
        """New values at the same clock (keeps the substep parity)."""
        return replace(self, values=values)

    def validate(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distribution contains non-finite values")
        if np.min(self.values) < 0.0:
            raise ValueError("distribution contains negative values")


@dataclass(frozen=True)
class MesoDistribution:
    """Cell-averaged density on the (x, e_x, e) grid."""

    values: np.ndarray      # (nx, nex, ne)
    time: float = 0.0
    steps: int = 0

    def advanced(self, values: np.ndarray, dt: float) -> "MesoDistribution":
        return replace(self, values=values, time=self.time + dt, steps=self.steps + 1)

    def with_values(self, values: np.ndarray) -> "MesoDistribution":
        """New values at the same clock (keeps the substep parity)."""
        return replace(self, values=values)

    def validate(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distribution contains non-finite values")
        if np.min(self.values) < 0.0:
            raise ValueError("distribution contains negative values")


@dataclass(frozen=True)
class ChannelState:
    """Two coupled surface layers sharing grids, temperature and potentials.

    ``coupling_scale`` multiplies the escaping-molecule exchange term and
    encodes the regime: strong 1/eps, moderate 1, weak eps.
    """

    lower: SurfaceDistribution
    upper: SurfaceDistribution
    coupling_scale: float = 1.0

    @property
    def time(self) -> float:
        return self.lower.time

    def advanced(self, lower_values, upper_values, dt) -> "ChannelState":
        return ChannelState(lower=self.lower.advanced(lower_values, dt),
                            upper=self.upper.advanced(upper_values, dt),
                            coupling_scale=self.coupling_scale)


@dataclass(frozen=True)
class BulkReservoir:
    """Incoming-molecule model standing in for the bulk gas above the layer.

    The gas arriving at the layer edge is Maxwellian with density
    ``density_at(t)`` and temperature ``temperature``; ``kind`` selects
    vacuum (nothing comes in), a constant Maxwellian, or a Maxwellian
    ramped linearly over ``ramp_time``.
    """

    kind: str = "vacuum"
    density: float = 0.0
    temperature: float = 1.0
    ramp_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("vacuum", "maxwellian", "ramp"):
            raise ValueError(f"unknown reservoir kind {self.kind!r}")
        if self.density < 0.0 or self.temperature <= 0.0:
            raise ValueError("reservoir needs density >= 0 and temperature > 0")

    def density_at(self, t: float) -> float:
        if self.kind == "vacuum":
            return 0.0
        if self.kind == "ramp" and self.ramp_time > 0.0:
            return self.density * min(max(t, 0.0) / self.ramp_time, 1.0)
        return self.density


@dataclass(frozen=True)
class DensityField:
    """Line density N(x) for the diffusion-level models."""

    values: np.ndarray
    time: float = 0.0

    def advanced(self, values: np.ndarray, dt: float) -> "DensityField":
        return replace(self, values=values, time=self.time + dt)

    def with_values(self, values: np.ndarray) -> "DensityField":
        return replace(self, values=values)

    def validate(self):
        if not np.all(np.isfinite(self.values)) or np.min(self.values) < 0.0:
            raise ValueError("density field must be finite and nonnegative")


@dataclass(frozen=True)
class TemperatureField:
    """Prescribed temperature profile T(x) > 0 (not evolved)."""

    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)) or np.min(self.values) <= 0.0:
            raise ValueError("temperature field must be finite and positive")
