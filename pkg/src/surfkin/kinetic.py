"""Kinetic solvers for the surface-layer model hierarchy.

Four time integrators share the same building blocks:

* ``TrappedSolver``: closed layer, every molecule confined.  Advection in x,
  a conservative tangential-force sweep in v, and implicit phonon
  relaxation, composed in alternating order so consecutive steps pair into
  a second-order split.
* ``TwoGroupSolver``: adds the escaping-molecule exchange with a bulk
  reservoir at the layer edge and records the flux handed to the bulk.
* ``ChannelSolver``: two facing layers trading escaping molecules, with a
  regime prefactor on the exchange term.
* ``MesoSolver``: the homogenized model; unbound molecules advect at their
  cell-averaged drift speed, bound molecules relax in place.

Every step is a pure function from state to state.  The transport sweeps
are finite-volume upwind with a slope limiter (van Leer by default) in
flux form, so cell totals telescope and mass is conserved to round-off;
the relaxation and exchange substeps conserve it by construction.

The ``eps`` parameter runs the long-time rescaled dynamics
``d_t g + (1/eps) (v d_x - U' d_v) g = 1/(eps^2 tau_ms) (relaxation)``
whose eps -> 0 limit is drift-diffusion; ``eps = 1`` is the plain model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import Equilibrium
from .grids import EnergyGrid, SpatialGrid, VelocityGrid, energy_grid
from .orbits import OrbitTable, build_orbit_table
from .potentials import NormalPotential, TangentialPotential
from .relaxation import (MesoRelaxation, RelaxationKernel, build_energy_kernel,
                         build_meso_relaxation, build_relaxation_kernel)
from .states import (BulkReservoir, ChannelState, MesoDistribution,
                     SurfaceDistribution)


class CflError(RuntimeError):
    """Raised before any state mutation when dt violates the advection bound."""


# ---------------------------------------------------------------------------
# finite-volume advection sweeps
# ---------------------------------------------------------------------------

def _limiter_vanleer(dm, dp):
    prod = dm * dp
    denom = dm + dp
    safe = np.where(np.abs(denom) > 0.0, denom, 1.0)
    return np.where(prod > 0.0, 2.0 * prod / safe, 0.0)


def _limiter_minmod(dm, dp):
    return np.where(dm * dp > 0.0, np.sign(dm) * np.minimum(np.abs(dm), np.abs(dp)), 0.0)


def _limiter_none(dm, dp):
    return 0.5 * (dm + dp)


LIMITERS = {"vanleer": _limiter_vanleer, "minmod": _limiter_minmod, "fromm": _limiter_none}


def advect_x(g, vel, dx, dt, limiter, periodic=True):
    """One upwind MUSCL sweep along axis 0 with per-column velocities."""
    if periodic:
        gm = np.roll(g, 1, axis=0)
        gp = np.roll(g, -1, axis=0)
    else:  # zero-gradient (outflow) ghosts
        gm = np.concatenate([g[:1], g[:-1]], axis=0)
        gp = np.concatenate([g[1:], g[-1:]], axis=0)
    dm = g - gm
    dp = gp - g
    slope = limiter(dm, dp)
    nu = vel * (dt / dx)
    face_l = g + 0.5 * (1.0 - nu) * slope
    if periodic:
        slope_p = np.roll(slope, -1, axis=0)
    else:
        slope_p = np.concatenate([slope[1:], np.zeros_like(slope[-1:])], axis=0)
    face_r = gp - 0.5 * (1.0 + nu) * slope_p
    flux = np.where(vel > 0.0, vel * face_l, vel * face_r)
    if periodic:
        div = flux - np.roll(flux, 1, axis=0)
    else:
        inflow = np.zeros_like(flux[:1])
        div = flux - np.concatenate([inflow, flux[:-1]], axis=0)
    return g - (dt / dx) * div


def advect_v(g, acc, dv, dt, limiter):
    """Force sweep along axis 1 with zero-flux ends (no mass crosses v_max)."""
    dm = np.zeros_like(g)
    dm[:, 1:, :] = g[:, 1:, :] - g[:, :-1, :]
    dp = np.zeros_like(g)
    dp[:, :-1, :] = dm[:, 1:, :]
    slope = limiter(dm, dp)
    nu = acc * (dt / dv)
    face_l = g[:, :-1, :] + 0.5 * (1.0 - nu) * slope[:, :-1, :]
    face_r = g[:, 1:, :] - 0.5 * (1.0 + nu) * slope[:, 1:, :]
    flux = np.where(acc > 0.0, acc * face_l, acc * face_r)
    out = g.copy()
    out[:, 0, :] -= (dt / dv) * flux[:, 0, :]
    out[:, 1:-1, :] -= (dt / dv) * (flux[:, 1:, :] - flux[:, :-1, :])
    out[:, -1, :] += (dt / dv) * flux[:, -1, :]
    return out


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------

@dataclass
class SurfaceModel:
    """Potentials, grids, orbit table and relaxation operators for one setup."""

    w_pot: NormalPotential
    u_pot: TangentialPotential
    eq: Equilibrium
    tau_ms: float
    x: SpatialGrid
    v: VelocityGrid
    table: OrbitTable
    kernel: RelaxationKernel
    _meso: MesoRelaxation | None = field(default=None, repr=False)

    @classmethod
    def build(cls, w_pot, u_pot, temperature=1.0, tau_ms=1.0, nx=128, nv=64,
              n_e_half=16, n_ex_half=32, v_max_factor=7.0, e_max_factor=7.0,
              guard_band=1e-3, trapped_fraction=0.6, domain=(0.0, 1.0),
              periodic=True) -> "SurfaceModel":
        eq = Equilibrium(temperature)
        vth = eq.thermal_speed / np.sqrt(2.0)   # sqrt(T)
        sep_z = np.sqrt(2.0 * w_pot.w_m) if np.isfinite(w_pot.w_m) else None
        sep_x = np.sqrt(2.0 * u_pot.u_m) if u_pot.u_m > 0.0 else None
        e_grid = energy_grid(e_max_factor * vth, n_e_half, separatrix=sep_z,
                             inner_fraction=trapped_fraction, guard_band=guard_band)
        ex_grid = energy_grid(e_max_factor * vth, n_ex_half, separatrix=sep_x,
                              inner_fraction=trapped_fraction, guard_band=guard_band)
        table = build_orbit_table(w_pot, u_pot, e_grid, ex_grid)
        vgrid = VelocityGrid(nv, v_max_factor * vth)
        kernel = build_relaxation_kernel(table, eq, tau_ms, vgrid)
        xgrid = SpatialGrid(nx, domain[0], domain[1], periodic=periodic)
        return cls(w_pot=w_pot, u_pot=u_pot, eq=eq, tau_ms=tau_ms, x=xgrid,
                   v=vgrid, table=table, kernel=kernel)

    # -- energy grids -------------------------------------------------------
    @property
    def e_grid(self) -> EnergyGrid:
        return self.table.e

    @property
    def ex_grid(self) -> EnergyGrid:
        return self.table.ex

    @property
    def meso(self) -> MesoRelaxation:
        if self._meso is None:
            self._meso = build_meso_relaxation(self.table, self.eq, self.tau_ms,
                                               kz=self.kernel.kz)
        return self._meso

    # -- equilibrium normalizations -----------------------------------------
    @property
    def gamma(self) -> float:
        """Discrete mass of the local equilibrium ell * M per unit length."""
        mz = self.eq.maxwell_z(self.e_grid.nodes)
        gx = self.eq.maxwell_x(self.v.centers).sum() * self.v.dv
        return float(gx * np.dot(self.table.ell * mz, self.e_grid.weights))

    @property
    def meso_weight(self) -> np.ndarray:
        """(nex, ne) measure turning h into a line density (factor 2 included)."""
        wx = np.abs(self.ex_grid.nodes) * self.table.inv_speed * self.ex_grid.weights
        return 2.0 * wx[:, None] * self.e_grid.weights[None, :]

    @property
    def gamma_meso(self) -> float:
        return float((self.meso.local_equilibrium * self.meso_weight).sum())

    # -- state construction --------------------------------------------------
    def equilibrium_state(self, density_profile) -> SurfaceDistribution:
        n_of_x = np.broadcast_to(np.asarray(density_profile, dtype=float), (self.x.n,))
        values = (n_of_x / self.gamma)[:, None, None] * self.kernel.local_equilibrium[None]
        return SurfaceDistribution(values=np.ascontiguousarray(values))

    def meso_equilibrium_state(self, density_profile) -> MesoDistribution:
        n_of_x = np.broadcast_to(np.asarray(density_profile, dtype=float), (self.x.n,))
        values = (n_of_x / self.gamma_meso)[:, None, None] * self.meso.local_equilibrium[None]
        return MesoDistribution(values=np.ascontiguousarray(values))

    # -- moments -------------------------------------------------------------
    def density(self, state) -> np.ndarray:
        """Line density N(x)."""
        if isinstance(state, MesoDistribution):
            return np.einsum("xjk,jk->x", state.values, self.meso_weight)
        return state.values.sum(axis=1) @ self.e_grid.weights * self.v.dv

    def flux(self, state) -> np.ndarray:
        """Line flux Phi(x)."""
        if isinstance(state, MesoDistribution):
            return np.einsum("xjk,jk->x", state.values,
                             self.table.drift[:, None] * self.meso_weight)
        vals = np.einsum("xvk,v->xk", state.values, self.v.centers)
        return vals @ self.e_grid.weights * self.v.dv

    def mass(self, state) -> float:
        if isinstance(state, ChannelState):
            return self.mass(state.lower) + self.mass(state.upper)
        return float(self.density(state).sum() * self.x.dx)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

class TrappedSolver:
    """Closed-layer kinetic solver (every molecule confined)."""

    def __init__(self, model: SurfaceModel, eps=1.0, relaxation=True,
                 limiter="vanleer", cfl=0.5):
        self.model = model
        self.eps = float(eps)
        self.relaxation = relaxation and model.tau_ms is not None \
            and np.isfinite(model.tau_ms)
        self.limiter = LIMITERS[limiter]
        self.cfl = float(cfl)
        self._vel = model.v.centers[None, :, None]
        self._acc = -model.u_pot.u_prime(model.x.centers)[:, None, None]
        self._amax = float(np.max(np.abs(self._acc)))

    def max_dt(self) -> float:
        dt_x = self.model.x.dx / self.model.v.centers.max()
        dt_v = self.model.v.dv / self._amax if self._amax > 0.0 else np.inf
        return self.cfl * self.eps * min(dt_x, dt_v)

    def _check_dt(self, dt):
        if dt > self.max_dt() * (1.0 + 1e-12):
            raise CflError(f"dt = {dt:g} exceeds the advection bound {self.max_dt():g}")

    def _substeps(self, state, dt):
        dta = dt / self.eps
        model = self.model

        def transport(vals, t):
            return advect_x(vals, self._vel, model.x.dx, dta, self.limiter,
                            periodic=model.x.periodic)

        def force(vals, t):
            if self._amax == 0.0:
                return vals
            return advect_v(vals, self._acc, model.v.dv, dta, self.limiter)

        def relax(vals, t):
            if not self.relaxation:
                return vals
            alpha = dt / (self.eps ** 2 * model.tau_ms)
            return model.kernel.implicit_update(vals, alpha)

        return [transport, force, relax]

    def step(self, state: SurfaceDistribution, dt: float) -> SurfaceDistribution:
        """Advance one step; order of substeps alternates with step parity."""
        self._check_dt(dt)
        ops = self._substeps(state, dt)
        if state.steps % 2:
            ops = ops[::-1]
        vals = state.values
        for op in ops:
            vals = op(vals, state.time)
        return state.advanced(vals, dt)


class TwoGroupSolver(TrappedSolver):
    """Layer with trapped and escaping molecules exchanging with a reservoir.

    Escaping molecules relax toward ``ell * f_in`` at rate ``1 / (2 tau)``
    (one round trip across the layer per exchange time); the net mass handed
    to the bulk is returned alongside the new state.
    """

    def __init__(self, model: SurfaceModel, reservoir: BulkReservoir,
                 eps=1.0, relaxation=True, limiter="vanleer", cfl=0.5):
        super().__init__(model, eps=eps, relaxation=relaxation,
                         limiter=limiter, cfl=cfl)
        free = ~model.table.trapped
        if not np.any(free):
            raise ValueError("two-group model needs escaping molecules (finite W_m)")
        nodes = model.e_grid.nodes
        self._idx_out = np.where(free & (nodes > 0.0))[0]          # outgoing e > 0
        self._idx_in = model.e_grid.flip_index()[self._idx_out]    # mirror nodes
        self.reservoir = reservoir
        t_b = reservoir.temperature
        e_out = nodes[self._idx_out]
        vsq = model.v.centers[:, None] ** 2
        esq = np.maximum(e_out[None, :] ** 2 - 2.0 * model.w_pot.w_m, 0.0)
        # ell * (Maxwellian at the layer edge per unit reservoir density)
        self._inflow_shape = (model.table.ell[self._idx_out][None, :]
                              * np.exp(-(vsq + esq) / (2.0 * t_b))
                              / (2.0 * np.pi * t_b))
        self._rate = 1.0 / (2.0 * model.table.tau[self._idx_out])
        self._pair_weight = model.e_grid.weights[self._idx_out] * model.v.dv

    def exchange(self, vals, t, dt):
        target = self.reservoir.density_at(t) * self._inflow_shape
        decay = -np.expm1(-self._rate * dt)            # 1 - exp(-rate dt)
        delta = decay[None, None, :] * (target[None] - vals[:, :, self._idx_out])
        out = vals.copy()
        out[:, :, self._idx_out] += delta
        out[:, :, self._idx_in] += delta
        outflux = -2.0 * np.einsum("xvk,k->x", delta, self._pair_weight)
        return out, outflux

    def step(self, state: SurfaceDistribution, dt: float):
        """Advance one step; returns (state, mass per length handed to bulk)."""
        self._check_dt(dt)
        base = self._substeps(state, dt)
        vals = state.values
        outflux = np.zeros(self.model.x.n)
        if state.steps % 2:
            vals, outflux = self.exchange(vals, state.time, dt)
            for op in base[::-1]:
                vals = op(vals, state.time)
        else:
            for op in base:
                vals = op(vals, state.time)
            vals, outflux = self.exchange(vals, state.time, dt)
        return state.advanced(vals, dt), outflux


class ChannelSolver(TrappedSolver):
    """Two facing surface layers exchanging their escaping molecules."""

    def __init__(self, model: SurfaceModel, eps=1.0, relaxation=True,
                 limiter="vanleer", cfl=0.5):
        super().__init__(model, eps=eps, relaxation=relaxation,
                         limiter=limiter, cfl=cfl)
        free = ~model.table.trapped
        if not np.any(free):
            raise ValueError("channel model needs escaping molecules (finite W_m)")
        nodes = model.e_grid.nodes
        self._idx_out = np.where(free & (nodes > 0.0))[0]
        self._idx_in = model.e_grid.flip_index()[self._idx_out]
        self._half_rate = 1.0 / (2.0 * model.table.tau[self._idx_out])

    def exchange(self, lower, upper, dt, coupling_scale):
        rate = (coupling_scale / self.eps) * self._half_rate
        mix = 0.5 * (-np.expm1(-2.0 * rate * dt))
        diff = mix[None, None, :] * (lower[:, :, self._idx_out]
                                     - upper[:, :, self._idx_in])
        new_lower = lower.copy()
        new_upper = upper.copy()
        new_lower[:, :, self._idx_out] -= diff
        new_lower[:, :, self._idx_in] -= diff
        new_upper[:, :, self._idx_out] += diff
        new_upper[:, :, self._idx_in] += diff
        return new_lower, new_upper

    def step(self, state: ChannelState, dt: float) -> ChannelState:
        self._check_dt(dt)
        ops = self._substeps(state.lower, dt)
        lo, up = state.lower.values, state.upper.values
        if state.lower.steps % 2:
            lo, up = self.exchange(lo, up, dt, state.coupling_scale)
            for op in ops[::-1]:
                lo = op(lo, state.time)
                up = op(up, state.time)
        else:
            for op in ops:
                lo = op(lo, state.time)
                up = op(up, state.time)
            lo, up = self.exchange(lo, up, dt, state.coupling_scale)
        return state.advanced(lo, up, dt)


class MesoSolver:
    """Homogenized solver: drift at the cell-averaged speed plus relaxation."""

    def __init__(self, model: SurfaceModel, eps=1.0, relaxation=True,
                 limiter="vanleer", cfl=0.5):
        self.model = model
        self.eps = float(eps)
        self.relaxation = relaxation and model.tau_ms is not None \
            and np.isfinite(model.tau_ms)
        self.limiter = LIMITERS[limiter]
        self.cfl = float(cfl)
        self._meso = model.meso
        self._vel = model.table.drift[None, :, None]
        self._vmax = float(np.max(np.abs(model.table.drift)))

    def max_dt(self) -> float:
        if self._vmax == 0.0:
            return np.inf
        return self.cfl * self.eps * self.model.x.dx / self._vmax

    def step(self, state: MesoDistribution, dt: float) -> MesoDistribution:
        if dt > self.max_dt() * (1.0 + 1e-12):
            raise CflError(f"dt = {dt:g} exceeds the advection bound {self.max_dt():g}")
        model = self.model

        def transport(vals):
            return advect_x(vals, self._vel, model.x.dx, dt / self.eps,
                            self.limiter, periodic=model.x.periodic)

        def relax(vals):
            if not self.relaxation:
                return vals
            alpha = dt / (self.eps ** 2 * model.tau_ms)
            return self._meso.implicit_update(vals, alpha)

        vals = state.values
        if state.steps % 2:
            vals = transport(relax(vals))
        else:
            vals = relax(transport(vals))
        return state.advanced(vals, dt)


def run_to(solver, state, t_final, dt=None, each=None):
    """Step a solver returning plain states to t_final (last step shortened)."""
    if dt is None:
        dt = solver.max_dt()
    while state.time < t_final - 1e-12 * max(t_final, 1.0):
        step_dt = min(dt, t_final - state.time)
        state = solver.step(state, step_dt)
        if isinstance(state, tuple):
            raise TypeError("run_to does not track per-step records; drive this "
                            "solver explicitly")
        if each is not None:
            each(state)
    return state
