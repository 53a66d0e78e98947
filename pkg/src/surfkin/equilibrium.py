"""Maxwellian weights and normalizers at temperature T (units m = k = 1).

The thermal equilibrium over (v_x, e) factorizes,
``M(v, e) = exp(-(v^2 + e^2) / 2T) = M_x(v) M_z(e)``, and its partial
masses at fixed height z (or cell coordinate y) have the closed forms

* ``gauss_norm      = int M_x dv = sqrt(2 pi T)``
* ``mass_norm_z(z)  = int M_z |e| sigma_z de = sqrt(2 pi T) exp(-W(z)/T)``
* ``mass_norm_2d(z) = 2 pi T exp(-W(z)/T)``  (both velocity components)
* ``cell_norm(y, z) = 2 pi T exp(-(Uhat(y) + W(z))/T)``

which follow from undoing the equivalent-velocity change of variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Equilibrium:
    temperature: float

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")

    def maxwell_x(self, v):
        return np.exp(-np.asarray(v, dtype=float) ** 2 / (2.0 * self.temperature))

    def maxwell_z(self, e):
        return np.exp(-np.asarray(e, dtype=float) ** 2 / (2.0 * self.temperature))

    def maxwell(self, v, e):
        v = np.asarray(v, dtype=float)
        e = np.asarray(e, dtype=float)
        return np.exp(-(v * v + e * e) / (2.0 * self.temperature))

    @property
    def gauss_norm(self) -> float:
        return float(np.sqrt(2.0 * np.pi * self.temperature))

    @property
    def thermal_speed(self) -> float:
        """Reference speed sqrt(2 T)."""
        return float(np.sqrt(2.0 * self.temperature))

    def mass_norm_z(self, w_pot, z):
        return self.gauss_norm * np.exp(-w_pot.w(z) / self.temperature)

    def mass_norm_2d(self, w_pot, z):
        return 2.0 * np.pi * self.temperature * np.exp(-w_pot.w(z) / self.temperature)

    def cell_norm(self, u_pot, y, w_pot, z):
        arg = u_pot.uhat(y) + w_pot.w(z)
        return 2.0 * np.pi * self.temperature * np.exp(-arg / self.temperature)
