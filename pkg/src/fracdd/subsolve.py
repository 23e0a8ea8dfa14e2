"""Space-time subdomain solution operators: Dirichlet-to-Neumann, Neumann-to-Dirichlet, Ventcell-to-Robin.

Each operator sweeps the whole time grid of its subdomain.  The affine part
(sources, initial state, exterior boundary and fracture endpoint data, zero
interface data) is computed once and cached; ``apply`` evaluates the linear
part only, which is what the Krylov solvers need.
"""

from __future__ import annotations

from concurrent.futures import Executor
from typing import Callable, Optional, Sequence

import numpy as np

from .discretize import (PhysicalData, StepSystem, assemble_subdomain, fracture_node_fluxes,
                         interface_output, step_rhs, subdomain_fluxes)
from .geometry import FractureMesh, SubdomainMesh
from .timegrid import TimeGrid, TimeGridError, TraceFunction


class SubdomainOperator:
    """One subdomain, one closure, one time grid."""

    def __init__(self, mesh: SubdomainMesh, phys: PhysicalData, grid: TimeGrid, closure: str,
                 alpha: Optional[float] = None, frac: Optional[FractureMesh] = None,
                 q: Optional[np.ndarray] = None, p0: Optional[np.ndarray] = None,
                 pg0: Optional[np.ndarray] = None, endpoint: str = "half_cell"):
        self.mesh = mesh
        self.phys = phys
        self.grid = grid
        self.closure = closure
        self.frac = frac
        self.endpoint = endpoint
        self.system: StepSystem = assemble_subdomain(mesh, phys, grid.dt, closure, alpha=alpha,
                                                     frac=frac, endpoint=endpoint)
        self.q = None if q is None or not np.any(q) else np.asarray(q, dtype=float)
        x0 = np.zeros(mesh.n_cells) if p0 is None else np.asarray(p0, dtype=float)
        if closure == "ventcell":
            g0 = np.zeros(mesh.ny) if pg0 is None else np.asarray(pg0, dtype=float)
            x0 = np.concatenate([x0, g0])
        self.x0 = x0
        self._affine: Optional[np.ndarray] = None

    @property
    def index(self) -> int:
        return self.mesh.index

    @property
    def alpha(self) -> Optional[float]:
        return self.system.alpha

    @property
    def ny(self) -> int:
        return self.mesh.ny

    def _check(self, data: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if data is None:
            return None
        data = np.asarray(data, dtype=float)
        if data.shape != (self.grid.M, self.ny):
            raise TimeGridError(
                f"data shape {data.shape} does not match grid ({self.grid.M}, {self.ny})")
        return data

    def sweep(self, data: Optional[np.ndarray] = None, affine: bool = False,
              store: bool = False) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Run all slabs; returns per-slab interface outputs and optionally the states.

        With ``affine=False`` sources, initial state and exterior data are zero.
        """
        data = self._check(data)
        sys = self.system
        M = self.grid.M
        out = np.empty((M, self.ny))
        states = np.empty((M, sys.n_unknowns)) if store else None
        x = self.x0.copy() if affine else np.zeros(sys.n_unknowns)
        q = self.q if affine else None
        for m in range(M):
            d = None if data is None else data[m]
            x = sys.solve(step_rhs(sys, x, q, d, affine))
            out[m] = interface_output(sys, x, d)
            if store:
                states[m] = x
        return out, states

    def affine_output(self) -> np.ndarray:
        if self._affine is None:
            self._affine = self.sweep(None, affine=True)[0]
        return self._affine

    def apply(self, data: np.ndarray) -> np.ndarray:
        return self.sweep(data, affine=False)[0]

    def fluxes(self, states: np.ndarray, data: Optional[np.ndarray], affine: bool) -> np.ndarray:
        """Edge fluxes per slab for states produced by ``sweep``."""
        data = self._check(data)
        F = np.empty((self.grid.M, self.mesh.n_edges))
        for m in range(self.grid.M):
            F[m] = subdomain_fluxes(self.system, states[m], None if data is None else data[m], affine)
        return F

    def fracture_fluxes(self, states: np.ndarray, affine: bool) -> np.ndarray:
        """Fracture node fluxes of the ventcell unknowns per slab."""
        n = self.mesh.n_cells
        return np.stack([fracture_node_fluxes(self.frac, self.phys.Kf_delta, s[n:], affine, self.endpoint)
                         for s in states])


def _as_values(op: SubdomainOperator, f: TraceFunction, closure: str) -> np.ndarray:
    if op.closure != closure:
        raise ValueError(f"operator has closure {op.closure!r}, expected {closure!r}")
    if f.grid != op.grid:
        raise TimeGridError("trace function is not on the operator's time grid")
    return f.values


def dtn_apply(op: SubdomainOperator, lam: TraceFunction) -> TraceFunction:
    """Outflow density ``u.n`` for interface pressure ``lam`` (linear part)."""
    return TraceFunction(op.grid, op.apply(_as_values(op, lam, "dirichlet")))


def ntd_apply(op: SubdomainOperator, phi: TraceFunction) -> TraceFunction:
    """Pressure trace for interface inflow density ``phi = -u.n`` (linear part)."""
    return TraceFunction(op.grid, op.apply(_as_values(op, phi, "neumann")))


def vtr_apply(op: SubdomainOperator, theta: TraceFunction, alpha: Optional[float] = None) -> TraceFunction:
    """Robin output ``u.n + alpha p_gamma`` for Ventcell data ``theta`` (linear part)."""
    if alpha is not None and op.alpha is not None and not np.isclose(alpha, op.alpha, rtol=1e-14, atol=0):
        raise ValueError(f"alpha {alpha} does not match the operator's alpha {op.alpha}")
    return TraceFunction(op.grid, op.apply(_as_values(op, theta, "ventcell")))


def map_subdomains(fn: Callable, items: Sequence, executor: Optional[Executor] = None) -> list:
    """``[fn(*args) for args in items]``, on ``executor`` when given; results keep the input order."""
    if executor is None:
        return [fn(*args) for args in items]
    return list(executor.map(lambda args: fn(*args), items))
