"""Reference solver of the coupled subdomain/fracture model and the solution container."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretize import PhysicalData, assemble_coupled, coupled_fluxes, step_rhs
from .geometry import FractureMesh, SubdomainMesh
from .timegrid import TimeGrid


@dataclass(eq=False)
class CoupledProblem:
    """Meshes (with boundary data), physics, time grid, sources and initial states.

    Sources are constant in time, one value per cell.  Missing sources and
    initial states default to zero.
    """

    m1: SubdomainMesh
    m2: SubdomainMesh
    frac: FractureMesh
    phys: PhysicalData
    grid: TimeGrid
    q1: Optional[np.ndarray] = None
    q2: Optional[np.ndarray] = None
    p1_0: Optional[np.ndarray] = None
    p2_0: Optional[np.ndarray] = None
    pg_0: Optional[np.ndarray] = None
    endpoint: str = "half_cell"

    def __post_init__(self):
        if self.m1.ny != self.frac.ny or self.m2.ny != self.frac.ny:
            raise ValueError("subdomain meshes and fracture mesh have different ny")
        for name, n in (("q1", self.m1.n_cells), ("q2", self.m2.n_cells), ("p1_0", self.m1.n_cells),
                        ("p2_0", self.m2.n_cells), ("pg_0", self.frac.ny)):
            v = getattr(self, name)
            v = np.zeros(n) if v is None else np.asarray(v, dtype=float)
            if v.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
            setattr(self, name, v)

    @property
    def meshes(self) -> tuple[SubdomainMesh, SubdomainMesh]:
        return self.m1, self.m2

    def source(self, index: int) -> np.ndarray:
        return self.q1 if index == 1 else self.q2

    def initial(self, index: int) -> np.ndarray:
        return self.p1_0 if index == 1 else self.p2_0

    @property
    def has_sources(self) -> bool:
        return bool(np.any(self.q1) or np.any(self.q2))


@dataclass(eq=False)
class SpaceTimeSolution:
    """Slab values of a space-time solution; each component may have its own time grid.

    ``p1[m]``, ``p2[m]`` are cell pressures on slab ``m`` of ``grid1``/``grid2``,
    ``pg[m]`` fracture segment pressures on ``grid_gamma``.  ``F1``/``F2``
    (edge-integrated fluxes) and ``Q`` (fracture node fluxes) are optional.
    """

    grid1: TimeGrid
    grid2: TimeGrid
    grid_gamma: TimeGrid
    p1: np.ndarray
    p2: np.ndarray
    pg: np.ndarray
    F1: Optional[np.ndarray] = None
    F2: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    p1_0: Optional[np.ndarray] = None
    p2_0: Optional[np.ndarray] = None
    pg_0: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, grid in (("p1", self.grid1), ("p2", self.grid2), ("pg", self.grid_gamma),
                           ("F1", self.grid1), ("F2", self.grid2), ("Q", self.grid_gamma)):
            v = getattr(self, name)
            if v is not None and v.shape[0] != grid.M:
                raise ValueError(f"{name} has {v.shape[0]} slabs, its grid has {grid.M}")

    @property
    def has_fluxes(self) -> bool:
        return self.F1 is not None and self.F2 is not None

    @property
    def grid(self) -> TimeGrid:
        """The shared grid of a time-conforming solution."""
        if not (self.grid1 == self.grid2 == self.grid_gamma):
            raise ValueError("solution components live on different time grids")
        return self.grid1


def solve_monolithic(prob: CoupledProblem, store_fluxes: bool = True) -> SpaceTimeSolution:
    """Backward-Euler sweep of the coupled system, one factorization for all slabs."""
    grid = prob.grid
    sys = assemble_coupled(prob.m1, prob.m2, prob.frac, prob.phys, grid.dt, prob.endpoint)
    n1, n2, ny = prob.m1.n_cells, prob.m2.n_cells, prob.frac.ny
    q = np.concatenate([prob.q1, prob.q2]) if prob.has_sources else None
    x = np.concatenate([prob.p1_0, prob.p2_0, prob.pg_0])
    M = grid.M
    p1 = np.empty((M, n1))
    p2 = np.empty((M, n2))
    pg = np.empty((M, ny))
    F1 = np.empty((M, prob.m1.n_edges)) if store_fluxes else None
    F2 = np.empty((M, prob.m2.n_edges)) if store_fluxes else None
    Q = np.empty((M, ny + 1)) if store_fluxes else None
    for m in range(M):
        x = sys.solve(step_rhs(sys, x, q))
        p1[m], p2[m], pg[m] = x[:n1], x[n1: n1 + n2], x[n1 + n2:]
        if store_fluxes:
            F1[m], F2[m], Q[m] = coupled_fluxes(sys, x, endpoint=prob.endpoint)
    return SpaceTimeSolution(grid, grid, grid, p1, p2, pg, F1, F2, Q,
                             prob.p1_0.copy(), prob.p2_0.copy(), prob.pg_0.copy())


def energy_diagnostic(sol: SpaceTimeSolution, prob: CoupledProblem) -> np.ndarray:
    """Storage-weighted energy ``E_m`` for ``m = 0..M`` (index 0 is the initial state)."""
    phys = prob.phys
    a1 = phys.s1 * prob.m1.cell_area
    a2 = phys.s2 * prob.m2.cell_area
    ag = phys.s_gamma * prob.frac.hy

    def energy(p1, p2, pg):
        return a1 * np.sum(p1 ** 2, axis=-1) + a2 * np.sum(p2 ** 2, axis=-1) + ag * np.sum(pg ** 2, axis=-1)

    e0 = energy(sol.p1_0, sol.p2_0, sol.pg_0)
    return np.concatenate([[e0], energy(sol.p1, sol.p2, sol.pg)])
