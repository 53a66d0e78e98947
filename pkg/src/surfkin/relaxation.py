"""Phonon relaxation operator on orbit-averaged distributions.

Collisions with thermal fluctuations of the solid drive the distribution
toward ``amplitude * ell * M`` at rate ``1 / tau_ms``.  The amplitude is a
row-stochastic average over energies,

    amplitude(e) = int khat(e, e') [v-marginal of g](e') / (gauss ell' M') de',

with the kernel

    khat(e, e') = (1/tau(e)) int_over_orbit_overlap
                  sigma(z, e) |e'| sigma(z, e') M(e') / mass_norm(z) dz,

whose rows integrate to one and which is in detailed balance with the
measure ``mu(e) = ell(e) M(e)``.  The same construction applies along the
tangential axis (inverse speeds ``sigma^#`` and cell coordinate y), and the
homogenized two-axis operator is exactly the tensor product of the two
one-axis kernels.

Discretization: the column integral over each energy cell is done in closed
form (a Gaussian mass through an erf bracket), so a matrix row is a single
orbit quadrature of ``sigma(z, e_i) * cell_mass_j(z)``; the integrable
logarithmic blow-up of the kernel near e' = e disappears because the cell
mass vanishes like the local speed there.  A symmetric diagonal rebalance
then enforces unit row sums and detailed balance to round-off, making the
equilibrium fixed point and mass conservation exact properties of the
discrete operator rather than quadrature-accurate ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .equilibrium import Equilibrium
from .grids import EnergyGrid, VelocityGrid
from .orbits import OrbitTable, _axis_orbit, _normal_axis, _tangential_axis

_GL24 = np.polynomial.legendre.leggauss(24)


class KernelBuildError(RuntimeError):
    """Raised when the relaxation kernel cannot be assembled."""


# ---------------------------------------------------------------------------
# one-axis kernel
# ---------------------------------------------------------------------------

@dataclass
class EnergyKernel:
    """Row-stochastic relaxation kernel on one signed energy grid."""

    grid: EnergyGrid
    matrix: np.ndarray         # (n, n), rows sum to one exactly
    raw_row_sums: np.ndarray   # quadrature row sums before rebalancing
    mu: np.ndarray             # detailed-balance measure per node
    maxwell: np.ndarray        # M at the nodes
    norm: np.ndarray           # tau (normal axis) or 2 sigma_bar (tangential)


def _row_panels(axis, orbit_lo, orbit_hi, edge_turnings):
    tol = 1e-12 * (axis.hi - axis.lo)
    cuts = [orbit_lo, orbit_hi]
    for c in (axis.min_loc, *axis.breakpoints):
        if orbit_lo + tol < c < orbit_hi - tol:
            cuts.append(c)
    for t in edge_turnings:
        if orbit_lo + tol < t < orbit_hi - tol:
            cuts.append(t)
    cuts = np.array(sorted(cuts))
    keep = np.concatenate([[True], np.diff(cuts) > tol])
    return cuts[keep]


def _sqrt_mapped_nodes(panels):
    """Quadrature nodes/weights with sqrt endpoint mapping on each half panel."""
    x, w = _GL24
    x01 = 0.5 * (x + 1.0)
    w01 = 0.5 * w
    zs, ws = [], []
    for p, q in zip(panels[:-1], panels[1:]):
        mid = 0.5 * (p + q)
        for anchor, sign in ((p, 1.0), (q, -1.0)):
            umax = np.sqrt(abs(mid - anchor))
            u = umax * x01
            zs.append(anchor + sign * u * u)
            ws.append(2.0 * u * umax * w01)
    return np.concatenate(zs), np.concatenate(ws)


def build_energy_kernel(axis_kind: str, table: OrbitTable, eq: Equilibrium) -> EnergyKernel:
    """Assemble the one-axis kernel for ``axis_kind`` in {"normal", "tangential"}."""
    if axis_kind == "normal":
        axis = _normal_axis(table.w_pot)
        grid = table.e
        lo, hi = table.z_lo, table.z_hi
        norm = table.tau
        barrier = table.w_pot.w_m
    elif axis_kind == "tangential":
        axis = _tangential_axis(table.u_pot)
        grid = table.ex
        lo, hi = table.y_lo, table.y_hi
        norm = 2.0 * table.inv_speed
        barrier = table.u_pot.u_m
    else:
        raise ValueError("axis_kind must be 'normal' or 'tangential'")

    n_half = grid.n_half
    pos = slice(n_half, None)               # positive nodes, ascending
    pos_edges = grid.edges[n_half:]         # 0 = edge .. e_max
    nodes = grid.nodes[pos]
    root_t = np.sqrt(2.0 * eq.temperature)

    # turning positions of every interior cell edge (used as panel cuts)
    edge_turnings = []
    for c in pos_edges[1:-1]:
        orb = _axis_orbit(axis, float(c), barrier)
        edge_turnings.extend((orb.lo, orb.hi))
    edge_turnings = np.array(sorted(set(edge_turnings)))

    k_half = np.empty((n_half, n_half))
    for i in range(n_half):
        irow = n_half + i
        panels = _row_panels(axis, lo[irow], hi[irow], edge_turnings)
        z, wq = _sqrt_mapped_nodes(panels)
        wz = axis.w(z)
        speed2 = np.maximum(nodes[i] ** 2 - 2.0 * wz, 0.0)
        sigma = np.where(speed2 > 0.0, 1.0 / np.sqrt(np.maximum(speed2, 1e-300)), 0.0)
        s_edges = np.sqrt(np.maximum(pos_edges[None, :] ** 2 - 2.0 * wz[:, None], 0.0))
        erfs = erf(s_edges / root_t)
        erfs[:, -1] = 1.0   # outermost cell is open ended: absorbs the tail mass
        cell_mass = 0.5 * (erfs[:, 1:] - erfs[:, :-1])
        k_half[i, :] = (wq * sigma) @ cell_mass / norm[irow]

    # mirror onto the signed grid: k depends only on |e| and |e'|
    pidx = np.concatenate([np.arange(n_half)[::-1], np.arange(n_half)])
    k_raw = k_half[np.ix_(pidx, pidx)]
    raw_row_sums = k_raw.sum(axis=1)

    maxwell = eq.maxwell_z(grid.nodes)
    mu = norm * np.abs(grid.nodes) * maxwell * grid.weights
    matrix = _rebalance(k_raw, mu)
    return EnergyKernel(grid=grid, matrix=matrix, raw_row_sums=raw_row_sums,
                        mu=mu, maxwell=maxwell, norm=norm)


def _rebalance(k_raw: np.ndarray, mu: np.ndarray, tol=1e-15, itmax=500) -> np.ndarray:
    """Symmetric diagonal scaling to unit row sums and exact detailed balance."""
    if np.any(k_raw < -1e-12) or np.any(mu <= 0.0):
        raise KernelBuildError("kernel quadrature produced negative entries")
    sym = mu[:, None] * np.maximum(k_raw, 0.0)
    sym = 0.5 * (sym + sym.T)
    d = np.ones_like(mu)
    for _ in range(itmax):
        r = d * (sym @ d)
        if np.max(np.abs(r / mu - 1.0)) < tol:
            break
        d *= np.sqrt(mu / r)
    else:
        raise KernelBuildError("kernel rebalancing did not converge")
    k = (d[:, None] * d[None, :] * sym) / mu[:, None]
    return k / k.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# surface operator: v-resolved distributions g(x, v, e)
# ---------------------------------------------------------------------------

@dataclass
class RelaxationKernel:
    """Relaxation operator for surface distributions g(..., v, e)."""

    kz: EnergyKernel
    vgrid: VelocityGrid
    eq: Equilibrium
    tau_ms: float
    ell: np.ndarray
    _amp_matrix: np.ndarray = field(init=False, repr=False)
    _lm: np.ndarray = field(init=False, repr=False)
    _gauss_disc: float = field(init=False)
    _implicit_cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        mx = self.eq.maxwell_x(self.vgrid.centers)
        self._gauss_disc = float(mx.sum() * self.vgrid.dv)
        mz = self.kz.maxwell
        self._amp_matrix = self.kz.matrix / (self._gauss_disc * self.ell * mz)[None, :]
        self._lm = mx[:, None] * (self.ell * mz)[None, :]

    @property
    def matrix(self) -> np.ndarray:
        return self.kz.matrix

    @property
    def raw_row_sums(self) -> np.ndarray:
        return self.kz.raw_row_sums

    @property
    def local_equilibrium(self) -> np.ndarray:
        """ell(e) * M(v, e) on the (v, e) grid; fixed points are multiples of it."""
        return self._lm

    def amplitude(self, g: np.ndarray) -> np.ndarray:
        """Per-energy equilibrium amplitude; one for g = ell * M."""
        marginal = g.sum(axis=-2) * self.vgrid.dv
        return marginal @ self._amp_matrix.T

    def collision_term(self, g: np.ndarray) -> np.ndarray:
        """(amplitude * ell * M - g) / tau_ms on the grid."""
        amp = self.amplitude(g)
        return (amp[..., None, :] * self._lm - g) / self.tau_ms

    def implicit_update(self, g: np.ndarray, alpha: float) -> np.ndarray:
        """Backward-Euler relaxation over alpha = dt / tau_ms; mass exact."""
        key = round(alpha, 15)
        minv = self._implicit_cache.get(key)
        if minv is None:
            n = self.kz.matrix.shape[0]
            minv = np.linalg.inv((1.0 + alpha) * np.eye(n) - alpha * self.kz.matrix)
            self._implicit_cache[key] = minv
        amp1 = self.amplitude(g) @ minv.T
        return (g + alpha * amp1[..., None, :] * self._lm) / (1.0 + alpha)


# ---------------------------------------------------------------------------
# homogenized operator: distributions h(..., e_x, e)
# ---------------------------------------------------------------------------

def _symmetric_factor(kernel: EnergyKernel):
    root = np.sqrt(kernel.mu)
    sym = root[:, None] * kernel.matrix / root[None, :]
    lam, q = np.linalg.eigh(0.5 * (sym + sym.T))
    fwd = q.T * root[None, :]           # theta -> eigenbasis
    bwd = (1.0 / root)[:, None] * q     # eigenbasis -> theta
    return lam, fwd, bwd


@dataclass
class MesoRelaxation:
    """Relaxation operator for homogenized distributions h(..., e_x, e).

    The amplitude is the tensor-product average  Kx @ (h / (ell Mx Mz)) @ Kz^T,
    equal for Maxwellian data to the v-resolved amplitude averaged over one
    corrugation cell with the inverse-speed weight.
    """

    kx: EnergyKernel
    kz: EnergyKernel
    eq: Equilibrium
    tau_ms: float
    ell: np.ndarray
    _lm: np.ndarray = field(init=False, repr=False)
    _eig: tuple = field(init=False, repr=False)
    _implicit_cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        mx = self.eq.maxwell_z(self.kx.grid.nodes)
        self._lm = mx[:, None] * (self.ell * self.kz.maxwell)[None, :]
        self._eig = (_symmetric_factor(self.kx), _symmetric_factor(self.kz))

    @property
    def local_equilibrium(self) -> np.ndarray:
        return self._lm

    def amplitude(self, h: np.ndarray) -> np.ndarray:
        psi = h / self._lm
        return np.einsum("ab,...bc,dc->...ad", self.kx.matrix, psi, self.kz.matrix,
                         optimize=True)

    def collision_term(self, h: np.ndarray) -> np.ndarray:
        return (self.amplitude(h) * self._lm - h) / self.tau_ms

    def implicit_update(self, h: np.ndarray, alpha: float) -> np.ndarray:
        """Backward-Euler relaxation over alpha = dt / tau_ms."""
        (lamx, fwdx, bwdx), (lamz, fwdz, bwdz) = self._eig
        key = round(alpha, 15)
        denom = self._implicit_cache.get(key)
        if denom is None:
            denom = (1.0 + alpha) - alpha * lamx[:, None] * lamz[None, :]
            self._implicit_cache[key] = denom
        amp0 = self.amplitude(h)
        spec = np.einsum("ab,...bc,dc->...ad", fwdx, amp0, fwdz, optimize=True)
        amp1 = np.einsum("ab,...bc,dc->...ad", bwdx, spec / denom, bwdz, optimize=True)
        return (h + alpha * amp1 * self._lm) / (1.0 + alpha)


def build_relaxation_kernel(table: OrbitTable, eq: Equilibrium, tau_ms: float,
                            vgrid: VelocityGrid) -> RelaxationKernel:
    kz = build_energy_kernel("normal", table, eq)
    return RelaxationKernel(kz=kz, vgrid=vgrid, eq=eq, tau_ms=tau_ms, ell=table.ell)


def build_meso_relaxation(table: OrbitTable, eq: Equilibrium, tau_ms: float,
                          kz: EnergyKernel | None = None) -> MesoRelaxation:
    if kz is None:
        kz = build_energy_kernel("normal", table, eq)
    kx = build_energy_kernel("tangential", table, eq)
    return MesoRelaxation(kx=kx, kz=kz, eq=eq, tau_ms=tau_ms, ell=table.ell)
