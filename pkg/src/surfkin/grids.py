"""Fixed computational grids.

Three axis types cover every model in the hierarchy:

* ``SpatialGrid``: uniform cells along the wall coordinate x.
* ``VelocityGrid``: uniform symmetric cells for the tangential velocity,
  truncated at ``v_max`` where the Maxwellian tail is negligible.
* ``EnergyGrid``: signed equivalent-velocity nodes built from contiguous
  cells that tile ``[-e_max, e_max]``.  When a separatrix magnitude is
  given (``sqrt(2 W_m)`` or ``sqrt(2 U_m)``), the cell edges line up with
  it so that the trapped/free (bound/unbound) split is exact, and nodes
  keep a configurable guard distance away from the separatrix where orbit
  times degenerate.

Grids are frozen at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    n: int
    lo: float = 0.0
    hi: float = 1.0
    periodic: bool = True
    centers: np.ndarray = field(init=False, repr=False)
    dx: float = field(init=False)

    def __post_init__(self):
        if self.n < 2 or self.hi <= self.lo:
            raise ValueError("spatial grid needs n >= 2 and hi > lo")
        dx = (self.hi - self.lo) / self.n
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "centers", self.lo + dx * (np.arange(self.n) + 0.5))

    @property
    def extent(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class VelocityGrid:
    n: int
    v_max: float
    centers: np.ndarray = field(init=False, repr=False)
    dv: float = field(init=False)

    def __post_init__(self):
        if self.n < 4 or self.n % 2 or self.v_max <= 0.0:
            raise ValueError("velocity grid needs even n >= 4 and v_max > 0")
        dv = 2.0 * self.v_max / self.n
        object.__setattr__(self, "dv", dv)
        object.__setattr__(self, "centers", -self.v_max + dv * (np.arange(self.n) + 0.5))


@dataclass(frozen=True)
class EnergyGrid:
    """Signed equivalent-velocity nodes with their tiling cells."""

    nodes: np.ndarray
    weights: np.ndarray          # cell widths, used as quadrature weights
    edges: np.ndarray            # len(nodes) + 1, ascending, tiles [-e_max, e_max]
    separatrix: float | None     # |e| splitting confined from escaping motion

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def n_half(self) -> int:
        return self.nodes.size // 2

    @property
    def e_max(self) -> float:
        return float(self.edges[-1])

    @property
    def inner(self) -> np.ndarray:
        """Mask of nodes below the separatrix (trapped / bound)."""
        if self.separatrix is None:
            return np.ones(self.n, dtype=bool)
        return np.abs(self.nodes) < self.separatrix

    def flip_index(self) -> np.ndarray:
        """Index map sending each node to its mirror at -e."""
        return np.arange(self.n)[::-1]


def energy_grid(e_max, n_half, separatrix=None, inner_fraction=0.6,
                guard_band=1e-3) -> EnergyGrid:
    """Build a symmetric energy grid with n_half cells per sign.

    ``separatrix`` is the |e| value separating confined from escaping
    motion; ``None`` (or a value at/beyond e_max) means a single region.
    ``inner_fraction`` sets the share of cells spent below the separatrix.
    Nodes are clamped at least ``guard_band * separatrix`` away from the
    separatrix itself.
    """
    if e_max <= 0.0 or n_half < 2:
        raise ValueError("energy grid needs e_max > 0 and n_half >= 2")
    sep = None
    if separatrix is not None and 0.0 < separatrix < e_max:
        sep = float(separatrix)
    if sep is None:
        pos_edges = np.linspace(0.0, e_max, n_half + 1)
    else:
        n_in = int(round(inner_fraction * n_half))
        n_in = min(max(n_in, 1), n_half - 1)
        pos_edges = np.concatenate([
            np.linspace(0.0, sep, n_in + 1),
            np.linspace(sep, e_max, n_half - n_in + 1)[1:],
        ])
    pos_nodes = 0.5 * (pos_edges[:-1] + pos_edges[1:])
    if sep is not None and guard_band > 0.0:
        gap = guard_band * sep
        pos_nodes = np.where(
            np.abs(pos_nodes - sep) < gap,
            np.where(pos_nodes < sep, sep - gap, sep + gap),
            pos_nodes,
        )
    nodes = np.concatenate([-pos_nodes[::-1], pos_nodes])
    widths = np.diff(pos_edges)
    weights = np.concatenate([widths[::-1], widths])
    edges = np.concatenate([-pos_edges[::-1], pos_edges[1:]])
    return EnergyGrid(nodes=nodes, weights=weights, edges=edges, separatrix=sep)
