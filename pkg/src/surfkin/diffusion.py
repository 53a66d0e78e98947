"""Transport coefficients and drift-diffusion solvers.

In the long-time limit the layer density N(t, x) obeys

    d_t N = d_x ( D d_x N + D_T d_x T + tau_ms U'(x) N ),

with coefficients given by Maxwellian averages over the orbit table:

    gamma  = << ell M >>,             D   = (tau_ms / gamma) << v^2 ell M >>,
    gamma' = d(gamma)/dT,             D_T = N * d(D)/dT
                                          = (tau_ms N / gamma)
                                            << v^2 ((v^2+e^2)/(2 T^2)
                                                    - gamma'/gamma) ell M >>.

Writing the flux against the pressure p = N T instead gives
C_p = D / T and C_T = D_T - (N / T) D, an algebraic identity.

The facing-layer system adds an exchange source c (N_other - N), with

    c = int_escaping |e| M de / int ell M de

(the equilibrium turnover weight of escaping molecules).

Solvers use conservative interface fluxes: telescoping makes the cell total
exact.  Time integration is backward Euler by default (tridiagonal /
cyclic solve, unconditionally stable); an explicit mode exists for tests.
The coupled pair is advanced in sum / difference form, where the exchange
is an exact exponential factor that commutes with the diffusion operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .equilibrium import Equilibrium
from .grids import SpatialGrid
from .orbits import OrbitTable, crossing_time_and_length
from .potentials import NormalPotential, TangentialPotential
from .states import DensityField, TemperatureField


class StabilityError(RuntimeError):
    """Raised when an explicit step exceeds its stability bound."""


class ConfigurationError(ValueError):
    """Raised when grids cannot support the requested computation."""


# ---------------------------------------------------------------------------
# coefficient quadrature
# ---------------------------------------------------------------------------

def _composite_gauss(edges, per_panel=10):
    x, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _panel_gauss(lo, hi, panels, per_panel=10, grade_toward=None, floor=1e-12):
    """Composite Gauss-Legendre nodes/weights on [lo, hi].

    With ``grade_toward`` = "lo" or "hi", panel widths shrink geometrically
    toward that end (down to ``floor`` times the interval), which recovers
    full accuracy for integrands with square-root behavior just beyond it.
    """
    if grade_toward is None:
        return _composite_gauss(np.linspace(lo, hi, panels + 1), per_panel)
    span = hi - lo
    levels = np.concatenate([[0.0], np.geomspace(floor, 1.0, panels)]) * span
    edges = (lo + levels) if grade_toward == "lo" else np.sort(hi - levels)
    return _composite_gauss(edges, per_panel)


@dataclass(frozen=True)
class CoefficientQuadrature:
    """High-order positive-half energy quadrature with cached orbit lengths."""

    e_nodes: np.ndarray
    e_weights: np.ndarray
    ell: np.ndarray
    escaping: np.ndarray
    v_nodes: np.ndarray
    v_weights: np.ndarray


def coefficient_quadrature(w_pot: NormalPotential, e_max: float, v_max: float,
                           guard_band=1e-3, refinement=1) -> CoefficientQuadrature:
    """Build the quadrature used for all coefficient integrals.

    Gauss panels per smooth energy region (split at the escape threshold
    with a guard gap) converge spectrally, so doubling ``refinement``
    reproduces the same values far beyond the verification tolerance.
    """
    panels = 16 * refinement
    sep = None
    if np.isfinite(w_pot.w_m) and w_pot.w_m > 0.0:
        sep = np.sqrt(2.0 * w_pot.w_m)
    if sep is not None and sep < e_max:
        gap = guard_band * sep
        lo1, lo2 = _panel_gauss(0.0, sep - gap, panels, grade_toward="hi")
        hi1, hi2 = _panel_gauss(sep + gap, e_max, panels, grade_toward="lo")
        e_nodes = np.concatenate([lo1, hi1])
        e_weights = np.concatenate([lo2, hi2])
        escaping = e_nodes > sep
    else:
        e_nodes, e_weights = _panel_gauss(0.0, e_max, 2 * panels)
        if w_pot.w_m == 0.0:
            escaping = np.ones(e_nodes.size, dtype=bool)   # no barrier at all
        else:
            escaping = np.zeros(e_nodes.size, dtype=bool)  # barrier beyond grid
    ell = np.array([crossing_time_and_length(w_pot, float(e))[1] for e in e_nodes])
    v_nodes, v_weights = _panel_gauss(0.0, v_max, panels)
    return CoefficientQuadrature(e_nodes=e_nodes, e_weights=e_weights, ell=ell,
                                 escaping=escaping, v_nodes=v_nodes,
                                 v_weights=v_weights)


@dataclass(frozen=True)
class TransportCoefficients:
    """Diffusion-level coefficients at one temperature."""

    diffusivity: float             # D, multiplies d_x N
    thermal_per_density: float     # D_T / N, multiplies N d_x T
    interlayer_rate: float         # c, facing-layer exchange rate
    gamma: float
    gamma_prime: float
    tau_ms: float
    temperature: float

    @property
    def pressure_coeff(self) -> float:
        """C_p = D / T (with p = N T); exact by definition."""
        return self.diffusivity / self.temperature

    def thermal_pressure_coeff(self, density):
        """C_T(N) = D_T - (N / T) D."""
        return (self.thermal_per_density - self.diffusivity / self.temperature) \
            * np.asarray(density, dtype=float)

    def flux_density_form(self, density, d_density, d_temperature):
        """Flux - (D dN + D_T dT) from pointwise gradients."""
        return -(self.diffusivity * d_density
                 + self.thermal_per_density * density * d_temperature)

    def flux_pressure_form(self, density, d_density, d_temperature):
        """Same flux via - (C_p dp + C_T dT) with dp = T dN + N dT."""
        d_pressure = self.temperature * d_density + density * d_temperature
        return -(self.pressure_coeff * d_pressure
                 + self.thermal_pressure_coeff(density) * d_temperature)


def compute_coefficients(source, eq: Equilibrium, tau_ms: float,
                         refinement=1, guard_band=None) -> TransportCoefficients:
    """Evaluate all transport coefficients by tensor quadrature.

    ``source`` is an OrbitTable (its potential and energy extent are used)
    or a prepared CoefficientQuadrature.  Doubling ``refinement`` is the
    resolution knob for cross-checks.
    """
    t = eq.temperature
    if isinstance(source, OrbitTable):
        e_max = source.e.e_max
        v_max = e_max
        quad = coefficient_quadrature(source.w_pot, e_max, v_max,
                                      guard_band=guard_band or 1e-3,
                                      refinement=refinement)
    elif isinstance(source, CoefficientQuadrature):
        quad = source
    else:
        raise TypeError("source must be an OrbitTable or CoefficientQuadrature")

    tail = np.exp(-quad.v_nodes.max() ** 2 / (2.0 * t))
    if tail > 1e-7:
        raise ConfigurationError(
            f"velocity cutoff leaves Maxwellian tail {tail:.2e} > 1e-7")

    mx = np.exp(-quad.v_nodes ** 2 / (2.0 * t))
    mz = np.exp(-quad.e_nodes ** 2 / (2.0 * t))
    # positive-half 1d moments; even integrands, so halves suffice in ratios
    m0v = np.dot(mx, quad.v_weights)
    m2v = np.dot(quad.v_nodes ** 2 * mx, quad.v_weights)
    m4v = np.dot(quad.v_nodes ** 4 * mx, quad.v_weights)
    l0e = np.dot(quad.ell * mz, quad.e_weights)
    l2e = np.dot(quad.e_nodes ** 2 * quad.ell * mz, quad.e_weights)
    esc = np.dot(np.abs(quad.e_nodes[quad.escaping]) * mz[quad.escaping],
                 quad.e_weights[quad.escaping])

    gamma = 4.0 * m0v * l0e
    gamma_prime = 4.0 * (m2v * l0e + m0v * l2e) / (2.0 * t * t)
    diffusivity = tau_ms * 4.0 * m2v * l0e / gamma
    bracket = 4.0 * (m4v * l0e + m2v * l2e) / (2.0 * t * t)
    thermal_per_density = tau_ms * (bracket - (gamma_prime / gamma) * 4.0 * m2v * l0e) \
        / gamma
    interlayer_rate = esc / l0e
    return TransportCoefficients(
        diffusivity=float(diffusivity),
        thermal_per_density=float(thermal_per_density),
        interlayer_rate=float(interlayer_rate),
        gamma=float(gamma), gamma_prime=float(gamma_prime),
        tau_ms=tau_ms, temperature=t,
    )


def coefficient_profiles(w_pot: NormalPotential, temperatures, tau_ms: float,
                         e_max: float, refinement=1, guard_band=1e-3):
    """Per-cell (D, D_T/N, gamma) for a prescribed temperature profile."""
    quad = coefficient_quadrature(w_pot, e_max, e_max, guard_band=guard_band,
                                  refinement=refinement)
    ts = np.asarray(temperatures, dtype=float)[:, None]
    mx = np.exp(-quad.v_nodes[None, :] ** 2 / (2.0 * ts))
    mz = np.exp(-quad.e_nodes[None, :] ** 2 / (2.0 * ts))
    m0v = mx @ quad.v_weights
    m2v = (quad.v_nodes ** 2 * mx) @ quad.v_weights
    m4v = (quad.v_nodes ** 4 * mx) @ quad.v_weights
    l0e = (quad.ell * mz) @ quad.e_weights
    l2e = (quad.e_nodes ** 2 * quad.ell * mz) @ quad.e_weights
    tcol = ts[:, 0]
    gamma = 4.0 * m0v * l0e
    gamma_prime = 4.0 * (m2v * l0e + m0v * l2e) / (2.0 * tcol ** 2)
    diff = tau_ms * 4.0 * m2v * l0e / gamma
    bracket = 4.0 * (m4v * l0e + m2v * l2e) / (2.0 * tcol ** 2)
    thermal = tau_ms * (bracket - (gamma_prime / gamma) * 4.0 * m2v * l0e) / gamma
    return diff, thermal, gamma


# ---------------------------------------------------------------------------
# diffusion solvers
# ---------------------------------------------------------------------------

def _interface_ring(values, periodic):
    """Values at interfaces i+1/2 (cyclic) or i+1/2 interior (bounded)."""
    if periodic:
        return 0.5 * (values + np.roll(values, -1))
    return 0.5 * (values[:-1] + values[1:])


class DriftDiffusionSolver:
    """Conservative solver for d_t N = d_x (D d_x N + drift(x) N).

    Fluxes live on interfaces, F = -(D dN/dx + drift N), with the centered
    interface average of N in the drift term; zero-flux ends when the grid
    is not periodic.  Backward Euler by default.  ``d_iface`` and
    ``drift_iface`` are interface values: n of them on a periodic grid,
    n - 1 interior ones otherwise (scalars broadcast).
    """

    def __init__(self, xgrid: SpatialGrid, d_iface, drift_iface=None,
                 implicit=True):
        self.x = xgrid
        ni = xgrid.n if xgrid.periodic else xgrid.n - 1
        self._d_iface = np.broadcast_to(np.asarray(d_iface, dtype=float),
                                        (ni,)).copy()
        if drift_iface is None:
            drift_iface = 0.0
        self._drift_iface = np.broadcast_to(np.asarray(drift_iface, dtype=float),
                                            (ni,)).copy()
        self.implicit = implicit
        self._build_operator()
        self._solver_cache = {}

    def _build_operator(self):
        n, dx = self.x.n, self.x.dx
        per = self.x.periodic
        ni = n if per else n - 1
        rows, cols, vals = [], [], []

        def add(i, j, v):
            rows.append(i % n)
            cols.append(j % n)
            vals.append(v)

        for k in range(ni):
            i, j = k, (k + 1) % n
            dcoef = self._d_iface[k] / dx
            acoef = self._drift_iface[k]
            # F_k = -(dcoef (N_j - N_i) + acoef (N_i + N_j)/2)
            for cell, sgn in ((i, -1.0), (j, +1.0)):
                add(cell, i, sgn / dx * (dcoef - 0.5 * acoef))
                add(cell, j, sgn / dx * (-dcoef - 0.5 * acoef))
        self._op = sp.csc_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    def rhs(self, values: np.ndarray) -> np.ndarray:
        return self._op @ values

    def explicit_bound(self) -> float:
        return 0.5 * self.x.dx ** 2 / max(self._d_iface.max(), 1e-300)

    def step(self, state: DensityField, dt: float) -> DensityField:
        if self.implicit:
            key = round(dt, 15)
            solve = self._solver_cache.get(key)
            if solve is None:
                n = self.x.n
                solve = factorized(sp.identity(n, format="csc") - dt * self._op)
                self._solver_cache[key] = solve
            new = solve(state.values)
        else:
            if dt > self.explicit_bound() * (1.0 + 1e-12):
                raise StabilityError(
                    f"explicit dt = {dt:g} exceeds bound {self.explicit_bound():g}")
            new = state.values + dt * self.rhs(state.values)
        return state.advanced(new, dt)


def _interface_positions(xgrid: SpatialGrid) -> np.ndarray:
    if xgrid.periodic:
        return xgrid.centers + 0.5 * xgrid.dx
    return xgrid.centers[:-1] + 0.5 * xgrid.dx


def drift_diffusion_solver(xgrid: SpatialGrid, coeffs: TransportCoefficients,
                           u_pot: TangentialPotential, implicit=True):
    """Density solver  d_t N = D d''N + tau_ms d_x(U' N)  for constant T."""
    drift = -coeffs.tau_ms * u_pot.u_prime(_interface_positions(xgrid))
    return DriftDiffusionSolver(xgrid, coeffs.diffusivity, drift_iface=drift,
                                implicit=implicit)


class NonisothermalSolver:
    """Density solver with a prescribed temperature profile T(x).

    d_t N = d_x ( D(T) d_x N + (D_T/N)(T) N d_x T + tau_ms U' N ); the
    temperature-gradient term is linear in N and folds into the drift.
    """

    def __init__(self, xgrid: SpatialGrid, w_pot: NormalPotential,
                 u_pot: TangentialPotential, temperature: TemperatureField,
                 tau_ms: float, e_max: float, implicit=True, refinement=1):
        self.x = xgrid
        self.temperature = temperature
        diff_c, thermal_c, _ = coefficient_profiles(
            w_pot, temperature.values, tau_ms, e_max, refinement=refinement)
        self._diff_cells = diff_c
        self._thermal_cells = thermal_c
        per = xgrid.periodic
        t_vals = temperature.values
        dT = ((np.roll(t_vals, -1) - t_vals) if per else np.diff(t_vals)) / xgrid.dx
        d_iface = _interface_ring(diff_c, per)
        th_iface = _interface_ring(thermal_c, per)
        drift = -(tau_ms * u_pot.u_prime(_interface_positions(xgrid))
                  + th_iface * dT)
        self._core = DriftDiffusionSolver(xgrid, d_iface, drift_iface=drift,
                                          implicit=implicit)

    def step(self, state: DensityField, dt: float) -> DensityField:
        return self._core.step(state, dt)

    def interface_flux_density_form(self, state: DensityField) -> np.ndarray:
        """Diagnostic flux -(D dN + D_T dT) at the interfaces."""
        n_vals, t_vals = state.values, self.temperature.values
        per = self.x.periodic
        dN = ((np.roll(n_vals, -1) - n_vals) if per else np.diff(n_vals)) / self.x.dx
        dT = ((np.roll(t_vals, -1) - t_vals) if per else np.diff(t_vals)) / self.x.dx
        d_if = _interface_ring(self._diff_cells, per)
        th_if = _interface_ring(self._thermal_cells, per)
        n_if = _interface_ring(n_vals, per)
        return -(d_if * dN + th_if * n_if * dT)

    def interface_flux_pressure_form(self, state: DensityField) -> np.ndarray:
        """Diagnostic flux -(C_p dp + C_T dT) at the interfaces, p = N T."""
        n_vals, t_vals = state.values, self.temperature.values
        per = self.x.periodic
        dN = ((np.roll(n_vals, -1) - n_vals) if per else np.diff(n_vals)) / self.x.dx
        dT = ((np.roll(t_vals, -1) - t_vals) if per else np.diff(t_vals)) / self.x.dx
        d_if = _interface_ring(self._diff_cells, per)
        th_if = _interface_ring(self._thermal_cells, per)
        n_if = _interface_ring(n_vals, per)
        t_if = _interface_ring(t_vals, per)
        c_p = d_if / t_if
        c_t = (th_if - d_if / t_if) * n_if
        dp = t_if * dN + n_if * dT
        return -(c_p * dp + c_t * dT)


class CoupledDiffusionSolver:
    """Facing-layer pair with exchange c (N_other - N).

    Advanced in sum and difference variables: the sum obeys the single
    drift-diffusion equation unchanged, the difference additionally decays
    by the exact factor exp(-2 c dt), which commutes with diffusion.
    """

    def __init__(self, base: DriftDiffusionSolver, interlayer_rate: float):
        self.base = base
        self.rate = float(interlayer_rate)

    def step(self, lower: DensityField, upper: DensityField, dt: float):
        total = self.base.step(lower.with_values(lower.values + upper.values), dt)
        diff = self.base.step(lower.with_values(lower.values - upper.values), dt)
        decay = np.exp(-2.0 * self.rate * dt)
        half_sum = 0.5 * total.values
        half_diff = 0.5 * decay * diff.values
        return (lower.advanced(half_sum + half_diff, dt),
                upper.advanced(half_sum - half_diff, dt))
