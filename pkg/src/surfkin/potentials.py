"""Wall and substrate potentials for surface-layer transport.

A normal potential ``W(z)`` confines molecules to a layer ``0 < z <= L``
next to a solid wall: repulsive toward ``z = 0``, a single minimum
``W(z_min) = 0`` inside the layer, attractive back up to the plateau
``W(z) = W_m`` for ``z >= L``.  ``W_m = inf`` models a layer molecules can
never leave (a hard lid at ``z = L``).

A tangential potential ``U(x) = Uhat(x / delta)`` is a periodic corrugation
along the wall with period ``2 * delta``.  The cell shape ``Uhat`` lives on
``[-1, 1]`` with ``0 <= Uhat <= U_m``, ``Uhat(0) = 0`` and ``Uhat(+-1) = U_m``.

Internal units set the molecular mass and the Boltzmann constant to one.
All evaluators are vectorized over their position argument and the objects
are immutable after construction, so they are safe to share across workers.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import PchipInterpolator


class PotentialDomainError(ValueError):
    """Raised when a potential or orbit is evaluated outside its domain."""


class PotentialShapeError(ValueError):
    """Raised when tabulated data violates the required well structure."""


def wrap_unit(y):
    """Wrap values into the periodic unit cell [-1, 1)."""
    return (np.asarray(y, dtype=float) + 1.0) % 2.0 - 1.0


# ---------------------------------------------------------------------------
# normal potentials W(z)
# ---------------------------------------------------------------------------

class NormalPotential:
    """Base class for the wall-normal potential W(z).

    Subclasses set ``w_m`` (plateau energy, may be ``inf``), ``length``
    (layer width L), ``z_min`` (location of the minimum) and implement
    ``_w_layer`` / ``_w_prime_layer`` for ``0 < z <= length``.
    ``breakpoints`` lists interior points where W is not smooth.
    """

    w_m: float
    length: float
    z_min: float
    breakpoints: tuple = ()

    def w(self, z):
        """Potential energy at height z (> 0); equals w_m for z beyond L."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0.0):
            raise PotentialDomainError("normal potential diverges at the wall z <= 0")
        inside = self._w_layer(np.minimum(z, self.length))
        if np.isinf(self.w_m):
            out = np.where(z > self.length, np.inf, inside)
        else:
            out = np.where(z >= self.length, self.w_m, inside)
        return out if out.ndim else float(out)

    def w_prime(self, z):
        """dW/dz inside the layer; zero on the outer plateau."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0.0):
            raise PotentialDomainError("normal potential diverges at the wall z <= 0")
        out = np.where(z >= self.length, 0.0, self._w_prime_layer(np.minimum(z, self.length)))
        return out if out.ndim else float(out)

    def _w_layer(self, z):
        raise NotImplementedError

    def _w_prime_layer(self, z):
        raise NotImplementedError


class TentPotential(NormalPotential):
    """Piecewise-linear well W(z) = min(slope * |z - z_min|, W_m).

    The repulsive branch ends in a hard reflecting wall at z = 0 for
    molecules energetic enough to reach it.
    """

    def __init__(self, slope=2.0, z_min=0.5, w_m=1.0, length=1.0):
        if slope <= 0.0 or not 0.0 < z_min < length:
            raise ValueError("tent potential needs slope > 0 and 0 < z_min < length")
        self.slope = float(slope)
        self.z_min = float(z_min)
        self.w_m = float(w_m)
        self.length = float(length)
        cuts = [z_min]
        if np.isfinite(w_m):
            for zc in (z_min - w_m / slope, z_min + w_m / slope):
                if 0.0 < zc < length and abs(zc - z_min) > 0.0:
                    cuts.append(zc)
        self.breakpoints = tuple(sorted(set(cuts)))

    def _w_layer(self, z):
        return np.minimum(self.slope * np.abs(z - self.z_min), self.w_m)

    def _w_prime_layer(self, z):
        raw = self.slope * np.sign(z - self.z_min)
        if np.isfinite(self.w_m):
            raw = np.where(self.slope * np.abs(z - self.z_min) >= self.w_m, 0.0, raw)
        return raw


class MorsePotential(NormalPotential):
    """Smooth Morse-shaped well, rescaled so that W(length) = W_m exactly.

    W(z) = depth * (1 - exp(-alpha (z - z_min)))^2 with depth chosen as
    W_m / (1 - exp(-alpha (L - z_min)))^2 when W_m is finite, and depth = 1
    when W_m = inf (hard lid at z = L).
    """

    def __init__(self, alpha=4.0, z_min=0.5, w_m=1.0, length=1.0):
        if alpha <= 0.0 or not 0.0 < z_min < length:
            raise ValueError("morse potential needs alpha > 0 and 0 < z_min < length")
        self.alpha = float(alpha)
        self.z_min = float(z_min)
        self.w_m = float(w_m)
        self.length = float(length)
        if np.isfinite(w_m):
            self.depth = w_m / (1.0 - np.exp(-alpha * (length - z_min))) ** 2
        else:
            self.depth = 1.0
        self.breakpoints = ()

    def _w_layer(self, z):
        return self.depth * (1.0 - np.exp(-self.alpha * (z - self.z_min))) ** 2

    def _w_prime_layer(self, z):
        ex = np.exp(-self.alpha * (z - self.z_min))
        return 2.0 * self.depth * self.alpha * ex * (1.0 - ex)


class SquareWellPotential(NormalPotential):
    """Flat floor of width z_w against the wall, then a step up to W_m.

    W = 0 on (0, z_w], W = W_m on (z_w, L].  Both the wall at z = 0 and the
    step at z = z_w reflect trapped molecules without slowing them down.
    """

    def __init__(self, well_width=0.5, w_m=1.0, length=1.0):
        if not 0.0 < well_width < length:
            raise ValueError("square well needs 0 < well_width < length")
        self.well_width = float(well_width)
        self.w_m = float(w_m)
        self.length = float(length)
        self.z_min = 0.5 * well_width
        self.breakpoints = (self.well_width,)

    def _w_layer(self, z):
        return np.where(z <= self.well_width, 0.0, self.w_m)

    def _w_prime_layer(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))


class TabulatedNormalPotential(NormalPotential):
    """Monotone piecewise-cubic interpolation of sampled (z, W) pairs.

    The samples must trace a single well: nonincreasing down to a zero
    minimum, then nondecreasing up to W(L) = W_m.  Evaluation left of the
    first sample extrapolates the repulsive branch linearly.
    """

    def __init__(self, z_samples, w_samples, w_m=None, length=None):
        z = np.asarray(z_samples, dtype=float)
        wv = np.asarray(w_samples, dtype=float)
        if z.ndim != 1 or z.shape != wv.shape or z.size < 4:
            raise PotentialShapeError("need matching 1d sample arrays with >= 4 points")
        if np.any(np.diff(z) <= 0.0) or z[0] <= 0.0:
            raise PotentialShapeError("sample heights must be positive and increasing")
        imin = int(np.argmin(wv))
        if abs(wv[imin]) > 1e-9 * max(1.0, wv.max()):
            raise PotentialShapeError("well floor must reach zero")
        if np.any(np.diff(wv[: imin + 1]) > 1e-12) or np.any(np.diff(wv[imin:]) < -1e-12):
            raise PotentialShapeError("samples must decrease to the minimum then increase")
        if np.any(wv < -1e-12):
            raise PotentialShapeError("potential values must be nonnegative")
        self.z_min = float(z[imin])
        self.length = float(length if length is not None else z[-1])
        self.w_m = float(w_m if w_m is not None else wv[-1])
        self._spl = PchipInterpolator(z, np.maximum(wv, 0.0), extrapolate=False)
        self._dspl = self._spl.derivative()
        self._z0 = float(z[0])
        self._w0 = float(max(wv[0], 0.0))
        s0 = float(self._dspl(self._z0))
        self._slope0 = s0 if s0 < 0.0 else -max(1.0, self._w0 / self._z0)
        self.breakpoints = tuple(float(t) for t in z[1:-1])

    def _w_layer(self, z):
        z = np.asarray(z, dtype=float)
        below = z < self._z0
        zin = np.where(below, self._z0, np.minimum(z, self._spl.x[-1]))
        vals = self._spl(zin)
        vals = np.where(below, self._w0 + self._slope0 * (z - self._z0), vals)
        return np.maximum(vals, 0.0)

    def _w_prime_layer(self, z):
        z = np.asarray(z, dtype=float)
        below = z < self._z0
        zin = np.where(below, self._z0, np.minimum(z, self._spl.x[-1]))
        vals = self._dspl(zin)
        return np.where(below, self._slope0, vals)


# ---------------------------------------------------------------------------
# tangential potentials U(x) = Uhat(x / delta)
# ---------------------------------------------------------------------------

class TangentialPotential:
    """Base class for the periodic corrugation along the wall.

    Subclasses implement the unit-cell shape ``uhat`` / ``uhat_prime`` on
    [-1, 1]; ``u_m`` is the barrier height and ``delta`` the half period.
    """

    u_m: float
    delta: float
    breakpoints: tuple = ()
    y_min: float = 0.0

    def uhat(self, y):
        raise NotImplementedError

    def uhat_prime(self, y):
        raise NotImplementedError

    def u(self, x):
        """Potential at wall coordinate x, periodic with period 2 * delta."""
        return self.uhat(wrap_unit(np.asarray(x, dtype=float) / self.delta))

    def u_prime(self, x):
        """dU/dx, the tangential force per unit mass (with opposite sign)."""
        return self.uhat_prime(wrap_unit(np.asarray(x, dtype=float) / self.delta)) / self.delta


class ZeroPotential(TangentialPotential):
    """Flat wall: U identically zero."""

    def __init__(self, delta=1.0):
        self.u_m = 0.0
        self.delta = float(delta)

    def uhat(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def uhat_prime(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))


class ParabolicPotential(TangentialPotential):
    """Unit cell Uhat(y) = U_m * y**2."""

    def __init__(self, u_m=1.0, delta=1.0):
        if u_m < 0.0:
            raise ValueError("barrier height must be nonnegative")
        self.u_m = float(u_m)
        self.delta = float(delta)

    def uhat(self, y):
        return self.u_m * np.asarray(y, dtype=float) ** 2

    def uhat_prime(self, y):
        return 2.0 * self.u_m * np.asarray(y, dtype=float)


class CosinePotential(TangentialPotential):
    """Unit cell Uhat(y) = U_m * (1 - cos(pi y)) / 2."""

    def __init__(self, u_m=1.0, delta=1.0):
        if u_m < 0.0:
            raise ValueError("barrier height must be nonnegative")
        self.u_m = float(u_m)
        self.delta = float(delta)

    def uhat(self, y):
        return 0.5 * self.u_m * (1.0 - np.cos(np.pi * np.asarray(y, dtype=float)))

    def uhat_prime(self, y):
        return 0.5 * np.pi * self.u_m * np.sin(np.pi * np.asarray(y, dtype=float))


class TabulatedTangentialPotential(TangentialPotential):
    """Monotone piecewise-cubic unit cell from samples on [-1, 1]."""

    def __init__(self, y_samples, u_samples, delta=1.0):
        y = np.asarray(y_samples, dtype=float)
        uv = np.asarray(u_samples, dtype=float)
        if y.ndim != 1 or y.shape != uv.shape or y.size < 4:
            raise PotentialShapeError("need matching 1d sample arrays with >= 4 points")
        if abs(y[0] + 1.0) > 1e-12 or abs(y[-1] - 1.0) > 1e-12 or np.any(np.diff(y) <= 0.0):
            raise PotentialShapeError("samples must increase from -1 to +1")
        if abs(uv[0] - uv[-1]) > 1e-9 * max(1.0, abs(uv[0])):
            raise PotentialShapeError("cell ends must share the barrier value")
        imin = int(np.argmin(uv))
        if abs(uv[imin]) > 1e-9 * max(1.0, uv.max()):
            raise PotentialShapeError("cell floor must reach zero")
        if np.any(np.diff(uv[: imin + 1]) > 1e-12) or np.any(np.diff(uv[imin:]) < -1e-12):
            raise PotentialShapeError("samples must decrease to the minimum then increase")
        if np.any(uv < -1e-12):
            raise PotentialShapeError("potential values must be nonnegative")
        self.u_m = float(max(uv[0], uv[-1]))
        self.delta = float(delta)
        self.y_min = float(y[imin])
        self._spl = PchipInterpolator(y, np.clip(uv, 0.0, self.u_m))
        self._dspl = self._spl.derivative()
        self.breakpoints = tuple(float(t) for t in y[1:-1])

    def uhat(self, y):
        return np.clip(self._spl(np.clip(y, -1.0, 1.0)), 0.0, self.u_m)

    def uhat_prime(self, y):
        return self._dspl(np.clip(y, -1.0, 1.0))


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------

_NORMAL_VARIANTS = ("tent", "morse", "square_well", "tabulated")
_TANGENTIAL_VARIANTS = ("zero", "parabolic", "cosine", "tabulated")


def normal_potential(variant="tent", **params) -> NormalPotential:
    """Build a normal potential from a variant name and keyword parameters."""
    if variant == "tent":
        return TentPotential(
            slope=params.get("slope", 2.0),
            z_min=params.get("z_min", 0.5),
            w_m=params.get("w_m", 1.0),
            length=params.get("length", 1.0),
        )
    if variant == "morse":
        return MorsePotential(
            alpha=params.get("alpha", 4.0),
            z_min=params.get("z_min", 0.5),
            w_m=params.get("w_m", 1.0),
            length=params.get("length", 1.0),
        )
    if variant == "square_well":
        return SquareWellPotential(
            well_width=params.get("well_width", 0.5),
            w_m=params.get("w_m", 1.0),
            length=params.get("length", 1.0),
        )
    if variant == "tabulated":
        return TabulatedNormalPotential(
            params["z_samples"], params["w_samples"],
            w_m=params.get("w_m"), length=params.get("length"),
        )
    raise ValueError(f"unknown normal potential variant {variant!r}; "
                     f"expected one of {_NORMAL_VARIANTS}")


def tangential_potential(variant="zero", **params) -> TangentialPotential:
    """Build a tangential potential from a variant name and keyword parameters."""
    delta = params.get("delta", 1.0)
    if delta <= 0.0:
        raise ValueError("half period delta must be positive")
    if variant == "zero":
        return ZeroPotential(delta=delta)
    if variant == "parabolic":
        return ParabolicPotential(u_m=params.get("u_m", 1.0), delta=delta)
    if variant == "cosine":
        return CosinePotential(u_m=params.get("u_m", 1.0), delta=delta)
    if variant == "tabulated":
        return TabulatedTangentialPotential(
            params["y_samples"], params["u_samples"], delta=delta,
        )
    raise ValueError(f"unknown tangential potential variant {variant!r}; "
                     f"expected one of {_TANGENTIAL_VARIANTS}")
