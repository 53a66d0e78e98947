"""Orbit geometry of molecules moving in the layer potentials.

A molecule with signed equivalent velocity ``e = sgn(v) * sqrt(v^2 + 2 W(z))``
oscillates between turning points where its kinetic energy vanishes.  This
module computes, for both the wall-normal well ``W(z)`` and one cell of the
tangential corrugation ``Uhat(y)``:

* turning points (or the hard wall / layer edge standing in for them),
* the inverse-speed integrals ``int (e^2 - 2 V)^(-1/2)`` that give the layer
  crossing time ``tau``, the orbit length ``ell = |e| tau``, the cell flight
  time ``tau_fl`` and the cell-averaged drift speed ``w``,
* an ``OrbitTable`` caching all of these on fixed energy grids.

The inverse-square-root turning-point singularity is never integrated
directly.  On the sub-interval that owns a smooth turning point the integral
is rewritten in the energy variable, ``V = V0 + (E - V0) sin^2(theta)``,
which turns it into a bounded smooth integrand ``sin(theta) / |V'(z)|``;
positions ``z(theta)`` come from bisection on the monotone branch, to which
the result is insensitive (first order, not square-root).  Hard walls,
potential steps and the layer edge are regular endpoints and need no care.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .potentials import NormalPotential, PotentialDomainError, TangentialPotential

_GL32 = np.polynomial.legendre.leggauss(32)
_GL48 = np.polynomial.legendre.leggauss(48)
_GL96 = np.polynomial.legendre.leggauss(96)


class QuadratureError(RuntimeError):
    """Raised when an orbit integral fails to reach its tolerance."""


# ---------------------------------------------------------------------------
# pointwise kinematics
# ---------------------------------------------------------------------------

def equivalent_velocity(pot: NormalPotential, z, v):
    """Signed equivalent velocity sgn(v) * sqrt(v^2 + 2 W(z)).

    Odd in v; the v = 0 ray is assigned the positive branch.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    sgn = np.where(v >= 0.0, 1.0, -1.0)
    out = sgn * np.sqrt(v * v + 2.0 * pot.w(z))
    return out if out.ndim else float(out)


def velocity_at(pot: NormalPotential, z, e):
    """Velocity sgn(e) * sqrt(e^2 - 2 W(z)) of a molecule on its orbit.

    Zero at turning points; positions outside the orbit raise.
    """
    z = np.asarray(z, dtype=float)
    e = np.asarray(e, dtype=float)
    arg = e * e - 2.0 * pot.w(z)
    scale = np.maximum(e * e, 1.0)
    if np.any(arg < -1e-12 * scale):
        raise PotentialDomainError("position outside the orbit interval for this energy")
    out = np.sign(e) * np.sqrt(np.maximum(arg, 0.0))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# generic 1d well
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Orbit:
    """One orbit interval with endpoint classification."""

    e: float
    lo: float
    hi: float
    sing_lo: bool   # True when the endpoint is a smooth turning point
    sing_hi: bool
    confined: bool  # trapped (normal axis) or bound (tangential axis)


@dataclass(frozen=True)
class _Axis:
    """A single confining well on an interval, seen by the quadratures."""

    w: object            # callable V(z), vectorized
    w_prime: object      # callable V'(z)
    breakpoints: tuple
    min_loc: float
    lo: float
    hi: float
    wall_lo: bool        # True when V conceptually diverges at `lo`


def _normal_axis(pot: NormalPotential) -> _Axis:
    return _Axis(w=pot.w, w_prime=pot.w_prime, breakpoints=pot.breakpoints,
                 min_loc=pot.z_min, lo=0.0, hi=pot.length, wall_lo=True)


def _tangential_axis(pot: TangentialPotential) -> _Axis:
    return _Axis(w=pot.uhat, w_prime=pot.uhat_prime, breakpoints=pot.breakpoints,
                 min_loc=pot.y_min, lo=-1.0, hi=1.0, wall_lo=False)


def _root_on(axis: _Axis, energy: float, a: float, b: float) -> float:
    return brentq(lambda z: float(axis.w(z)) - energy, a, b, xtol=1e-15, rtol=8.9e-16)


def _is_singular_end(axis: _Axis, energy: float, z_end: float, inward: float) -> bool:
    # A root of V = E is a "soft" turning point (inverse-sqrt singular) when
    # V is still close to E a tiny step inside; across a step or hard wall
    # the potential immediately drops away and the speed stays finite.
    probe = z_end + inward * 1e-12 * (axis.hi - axis.lo)
    return float(axis.w(probe)) > 0.5 * energy


def _axis_orbit(axis: _Axis, e: float, w_m: float) -> Orbit:
    """Turning points / wall endpoints for signed equivalent velocity e."""
    energy = 0.5 * e * e
    if e == 0.0:
        return Orbit(e, axis.min_loc, axis.min_loc, False, False, True)
    span = axis.hi - axis.lo
    eps = 1e-13 * span

    # inner (repulsive) side
    w_inner = float(axis.w(axis.lo + eps)) if axis.wall_lo else float(axis.w(axis.lo))
    if energy >= w_inner:
        lo, sing_lo = axis.lo, False
    else:
        lo = _root_on(axis, energy, axis.lo + eps, axis.min_loc)
        sing_lo = _is_singular_end(axis, energy, lo, +1.0)

    # outer side
    if np.isfinite(w_m) and energy >= w_m:
        return Orbit(e, lo, axis.hi, sing_lo, False, False)
    w_outer = float(axis.w(axis.hi))
    if energy >= w_outer:
        hi, sing_hi = axis.hi, False
    else:
        hi = _root_on(axis, energy, axis.min_loc, axis.hi)
        sing_hi = _is_singular_end(axis, energy, hi, -1.0)
    return Orbit(e, lo, hi, sing_lo, sing_hi, True)


def _orbit_cuts(axis: _Axis, orbit: Orbit) -> np.ndarray:
    tol = 1e-12 * (axis.hi - axis.lo)
    cuts = [orbit.lo, orbit.hi]
    for c in (axis.min_loc, *axis.breakpoints):
        if orbit.lo + tol < c < orbit.hi - tol:
            cuts.append(c)
    return np.array(sorted(cuts))


def _invert_monotone(wfun, targets, a, b, increasing, iters=90):
    """Bisection for z with V(z) = target on a monotone branch [a, b]."""
    lo = np.full_like(targets, a)
    hi = np.full_like(targets, b)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        go_right = (wfun(mid) < targets) if increasing else (wfun(mid) > targets)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def _gl_sum(f, a, b, rule):
    x, w = rule
    half = 0.5 * (b - a)
    return half * float(np.dot(w, f(0.5 * (a + b) + half * x)))


def _adaptive_gl(f, a, b, tol, depth=0):
    whole = _gl_sum(f, a, b, _GL32)
    mid = 0.5 * (a + b)
    fine = _gl_sum(f, a, mid, _GL32) + _gl_sum(f, mid, b, _GL32)
    if abs(fine - whole) <= tol * max(abs(fine), 1e-30) + 1e-16:
        return fine
    if depth >= 40:
        raise QuadratureError("adaptive quadrature failed to converge")
    return (_adaptive_gl(f, a, mid, tol, depth + 1)
            + _adaptive_gl(f, mid, b, tol, depth + 1))


def _turning_piece(axis: _Axis, energy: float, p: float, q: float,
                   turning_at_hi: bool, rtol=1e-11) -> float:
    """Inverse-speed integral over a monotone piece owning a turning point.

    Substituting V = V_anchor + (E - V_anchor) sin^2(theta) gives
    sqrt(2 (E - V_anchor)) * int_0^{pi/2} sin(theta) / |V'(z)| d(theta),
    bounded even when the well floor is quadratic.
    """
    anchor = p if turning_at_hi else q
    w_anchor = float(axis.w(anchor))
    gap = energy - w_anchor
    if gap <= 0.0:
        return 0.0
    increasing = turning_at_hi

    def integrand(theta):
        targets = w_anchor + gap * np.sin(theta) ** 2
        z = _invert_monotone(axis.w, targets, p, q, increasing)
        return np.sin(theta) / np.abs(axis.w_prime(z))

    coarse = _gl_sum(integrand, 0.0, 0.5 * np.pi, _GL48)
    fine = _gl_sum(integrand, 0.0, 0.5 * np.pi, _GL96)
    if abs(fine - coarse) > rtol * max(abs(fine), 1e-30) + 1e-14:
        finer = (_gl_sum(integrand, 0.0, 0.25 * np.pi, _GL96)
                 + _gl_sum(integrand, 0.25 * np.pi, 0.5 * np.pi, _GL96))
        if abs(finer - fine) > 10.0 * rtol * max(abs(finer), 1e-30) + 1e-13:
            raise QuadratureError("turning-point quadrature failed to converge")
        fine = finer
    return np.sqrt(2.0 * gap) * fine


def inverse_speed_integral(axis: _Axis, orbit: Orbit, rtol=1e-12) -> float:
    """int over the orbit of (e^2 - 2 V(z))^(-1/2) dz."""
    if orbit.hi <= orbit.lo:
        raise PotentialDomainError("degenerate orbit (e = 0) has no crossing time")
    energy = 0.5 * orbit.e * orbit.e
    cuts = _orbit_cuts(axis, orbit)
    total = 0.0
    for p, q in zip(cuts[:-1], cuts[1:]):
        sing_here = None
        if orbit.sing_lo and p == orbit.lo:
            sing_here = "lo"
        elif orbit.sing_hi and q == orbit.hi:
            sing_here = "hi"
        if sing_here is None:
            def f(z):
                return 1.0 / np.sqrt(np.maximum(orbit.e ** 2 - 2.0 * axis.w(z), 1e-300))
            total += _adaptive_gl(f, p, q, rtol)
        else:
            total += _turning_piece(axis, energy, p, q, turning_at_hi=(sing_here == "hi"))
    return total


# ---------------------------------------------------------------------------
# normal axis: turning points, crossing time, orbit length
# ---------------------------------------------------------------------------

def normal_orbit(pot: NormalPotential, e: float) -> Orbit:
    return _axis_orbit(_normal_axis(pot), float(e), pot.w_m)


def turning_points(pot: NormalPotential, e: float):
    """Orbit interval (z_lo, z_hi); (z_min, z_min) for e = 0, z_hi = L when free."""
    orb = normal_orbit(pot, e)
    return orb.lo, orb.hi


def crossing_time_and_length(pot: NormalPotential, e: float):
    """Layer crossing time tau (one traversal) and orbit length |e| * tau."""
    orb = normal_orbit(pot, e)
    tau = inverse_speed_integral(_normal_axis(pot), orb)
    return tau, abs(e) * tau


# ---------------------------------------------------------------------------
# tangential axis: cell turning points, flight time, drift, inverse speed
# ---------------------------------------------------------------------------

def tangential_turning_points(pot: TangentialPotential, e: float):
    """Cell turning points (y_lo, y_hi); (-1, +1) for unbound molecules."""
    if e == 0.0:
        return pot.y_min, pot.y_min
    orb = _axis_orbit(_tangential_axis(pot), float(e), pot.u_m)
    if not _is_bound(pot, e):
        return -1.0, 1.0
    return orb.lo, orb.hi


def _is_bound(pot: TangentialPotential, e: float) -> bool:
    return e * e <= 2.0 * pot.u_m


def mean_inverse_speed(pot: TangentialPotential, e: float) -> float:
    """Half the inverse-speed integral over one cell orbit.

    For unbound molecules this equals 1 / |drift speed|; for bound ones it
    is the finite half period of the oscillation divided by the half cell.
    """
    if e == 0.0:
        raise PotentialDomainError("inverse speed undefined at e = 0")
    axis = _tangential_axis(pot)
    orb = _axis_orbit(axis, float(e), pot.u_m)
    return 0.5 * inverse_speed_integral(axis, orb)


def flight_time_and_drift(pot: TangentialPotential, e: float):
    """Cell flight time and cell-averaged drift velocity.

    Unbound molecules cross one cell (length 2 delta) in
    tau_fl = delta * int_{-1}^{1} (e^2 - 2 Uhat)^(-1/2) dy and drift at
    2 sgn(e) delta / tau_fl.  Bound molecules never cross: (inf, 0).
    """
    if _is_bound(pot, e):
        return np.inf, 0.0
    sigma = mean_inverse_speed(pot, e)
    tau_fl = 2.0 * pot.delta * sigma
    return tau_fl, np.sign(e) / sigma


# ---------------------------------------------------------------------------
# orbit table
# ---------------------------------------------------------------------------

@dataclass
class OrbitTable:
    """Per-node orbit quantities on fixed energy grids.

    Normal axis (signed equivalent velocity e): turning points ``z_lo`` /
    ``z_hi``, crossing time ``tau``, orbit length ``ell`` and the trapped
    mask.  Tangential axis (signed e_x): cell turning points ``y_lo`` /
    ``y_hi``, flight time ``tau_flight`` (inf when bound), drift velocity
    ``drift`` and mean inverse speed ``inv_speed``.  Immutable after build.
    """

    w_pot: NormalPotential
    u_pot: TangentialPotential
    e: object          # EnergyGrid, normal axis
    z_lo: np.ndarray
    z_hi: np.ndarray
    sing_lo: np.ndarray
    sing_hi: np.ndarray
    tau: np.ndarray
    ell: np.ndarray
    trapped: np.ndarray
    ex: object         # EnergyGrid, tangential axis
    y_lo: np.ndarray
    y_hi: np.ndarray
    bound: np.ndarray
    tau_flight: np.ndarray
    drift: np.ndarray
    inv_speed: np.ndarray


def build_orbit_table(w_pot: NormalPotential, u_pot: TangentialPotential,
                      e_grid, ex_grid) -> OrbitTable:
    """Evaluate every orbit quantity on the two energy grids.

    Nodes are independent; any failure aborts with the offending node in
    the message.  The result is deterministic for fixed inputs.
    """
    n = e_grid.n
    z_lo = np.empty(n)
    z_hi = np.empty(n)
    s_lo = np.zeros(n, dtype=bool)
    s_hi = np.zeros(n, dtype=bool)
    tau = np.empty(n)
    ell = np.empty(n)
    trapped = np.zeros(n, dtype=bool)
    axis = _normal_axis(w_pot)
    for i, e in enumerate(e_grid.nodes):
        try:
            orb = _axis_orbit(axis, float(e), w_pot.w_m)
            z_lo[i], z_hi[i] = orb.lo, orb.hi
            s_lo[i], s_hi[i] = orb.sing_lo, orb.sing_hi
            trapped[i] = orb.confined
            tau[i] = inverse_speed_integral(axis, orb)
            ell[i] = abs(e) * tau[i]
        except Exception as exc:  # noqa: BLE001 - re-raise with node context
            raise type(exc)(f"normal-axis node {i} (e = {e:.6g}): {exc}") from exc

    m = ex_grid.n
    y_lo = np.empty(m)
    y_hi = np.empty(m)
    bound = np.zeros(m, dtype=bool)
    tau_fl = np.empty(m)
    drift = np.empty(m)
    inv_speed = np.empty(m)
    for j, e in enumerate(ex_grid.nodes):
        try:
            bound[j] = _is_bound(u_pot, float(e))
            y_lo[j], y_hi[j] = tangential_turning_points(u_pot, float(e))
            inv_speed[j] = mean_inverse_speed(u_pot, float(e))
            tau_fl[j], drift[j] = flight_time_and_drift(u_pot, float(e))
        except Exception as exc:  # noqa: BLE001
            raise type(exc)(f"tangential-axis node {j} (e_x = {e:.6g}): {exc}") from exc

    return OrbitTable(
        w_pot=w_pot, u_pot=u_pot,
        e=e_grid, z_lo=z_lo, z_hi=z_hi, sing_lo=s_lo, sing_hi=s_hi,
        tau=tau, ell=ell, trapped=trapped,
        ex=ex_grid, y_lo=y_lo, y_hi=y_hi, bound=bound,
        tau_flight=tau_fl, drift=drift, inv_speed=inv_speed,
    )
