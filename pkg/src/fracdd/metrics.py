"""Space-time L2 norms and errors of solutions, and error-driven stopping for the iterative solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import INTERIOR, FractureMesh, SubdomainMesh
from .monolithic import SpaceTimeSolution
from .timegrid import TimeGrid, overlap_lengths


@dataclass
class ErrorReport:
    err_p_matrix: float
    err_u_matrix: float
    err_p_fracture: float
    series: dict = field(default_factory=dict)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.err_p_matrix, self.err_u_matrix, self.err_p_fracture


def flux_weights(mesh: SubdomainMesh) -> np.ndarray:
    """Weight turning squared edge-integrated fluxes into the L2 norm of the velocity.

    The velocity density on edge ``e`` is ``F/len``; each edge owns the dual
    area ``hx*hy`` (half of it on boundary and interface edges), matching the
    trapezoidal velocity mass used by the discretization.
    """
    area = np.where(mesh.edge_kind == INTERIOR, mesh.cell_area, 0.5 * mesh.cell_area)
    return area / mesh.edge_length ** 2


def _sq_norm_time(values: np.ndarray, grid: TimeGrid, weights) -> float:
    return float(grid.dt * np.sum((values ** 2) @ weights)) if np.ndim(weights) else \
        float(grid.dt * weights * np.sum(values ** 2))


def solution_norms(sol: SpaceTimeSolution, meshes: tuple[SubdomainMesh, SubdomainMesh],
                   frac: FractureMesh) -> tuple[float, float, float]:
    """Space-time L2 norms: matrix pressure, matrix velocity, fracture pressure."""
    m1, m2 = meshes
    p2 = _sq_norm_time(sol.p1, sol.grid1, m1.cell_area) + _sq_norm_time(sol.p2, sol.grid2, m2.cell_area)
    if sol.has_fluxes:
        u2 = _sq_norm_time(sol.F1, sol.grid1, flux_weights(m1)) + \
            _sq_norm_time(sol.F2, sol.grid2, flux_weights(m2))
        u = float(np.sqrt(u2))
    else:
        u = float("nan")
    pf2 = _sq_norm_time(sol.pg, sol.grid_gamma, frac.hy)
    return float(np.sqrt(p2)), u, float(np.sqrt(pf2))


def _sq_diff(a: np.ndarray, ga: TimeGrid, b: np.ndarray, gb: TimeGrid, weights, chunk: int = 64) -> float:
    """``int_0^T sum_k w_k (a(t) - b(t))_k^2 dt`` for two piecewise-constant-in-time arrays."""
    if ga == gb:
        d = a - b
        return _sq_norm_time(d, ga, weights)
    W = overlap_lengths(ga, gb).tocoo()
    ia, ib, lens = W.row, W.col, W.data
    w = np.asarray(weights, dtype=float)
    total = 0.0
    for s in range(0, len(lens), chunk):
        d = a[ia[s: s + chunk]] - b[ib[s: s + chunk]]
        sq = (d ** 2) @ w if w.ndim else w * np.sum(d ** 2, axis=1)
        total += float(np.dot(lens[s: s + chunk], sq))
    return total


def compute_errors(sol: SpaceTimeSolution, ref: SpaceTimeSolution,
                   meshes: tuple[SubdomainMesh, SubdomainMesh], frac: FractureMesh) -> ErrorReport:
    """Space-time L2 differences, exact for piecewise-constant-in-time data on any two grids.

    The velocity error is NaN unless both solutions carry fluxes.
    """
    m1, m2 = meshes
    for name, mesh, a, b in (("p1", m1, sol.p1, ref.p1), ("p2", m2, sol.p2, ref.p2)):
        if a.shape[1] != mesh.n_cells or b.shape[1] != mesh.n_cells:
            raise ValueError(f"{name}: solution and reference do not match the mesh")
    if sol.pg.shape[1] != frac.ny or ref.pg.shape[1] != frac.ny:
        raise ValueError("fracture pressures do not match the fracture mesh")
    ep = _sq_diff(sol.p1, sol.grid1, ref.p1, ref.grid1, m1.cell_area) + \
        _sq_diff(sol.p2, sol.grid2, ref.p2, ref.grid2, m2.cell_area)
    if sol.has_fluxes and ref.has_fluxes:
        eu = _sq_diff(sol.F1, sol.grid1, ref.F1, ref.grid1, flux_weights(m1)) + \
            _sq_diff(sol.F2, sol.grid2, ref.F2, ref.grid2, flux_weights(m2))
        eu = float(np.sqrt(eu))
    else:
        eu = float("nan")
    ef = _sq_diff(sol.pg, sol.grid_gamma, ref.pg, ref.grid_gamma, frac.hy)
    return ErrorReport(float(np.sqrt(ep)), eu, float(np.sqrt(ef)))


STOP_METRICS = ("max", "p", "u")


class ErrorMonitor:
    """Tracks the error of iterates against a known solution and stops below ``tol``.

    ``errors_of(x)`` returns ``(err_p_matrix, err_u_matrix, err_p_fracture)``
    for an interface iterate ``x``.  Errors are evaluated every ``stride``
    iterations; once one falls below ``tol`` (relative to the iterate-0
    error, or absolute when ``relative=False``) the preceding window is
    scanned so the reported count is the first iteration that meets it.
    """

    def __init__(self, errors_of: Callable[[np.ndarray], tuple], tol: float = 1e-6,
                 stride: int = 1, metric: str = "max", relative: bool = True,
                 max_iters: Optional[int] = None):
        if metric not in STOP_METRICS:
            raise ValueError(f"metric must be one of {STOP_METRICS}")
        self.errors_of = errors_of
        self.tol = tol
        self.stride = max(int(stride), 1)
        self.metric = metric
        self.relative = relative
        self.max_iters = max_iters
        self.errors: dict[int, tuple] = {}
        self.base: Optional[tuple] = None
        self.hit: Optional[int] = None

    def _scalar(self, e: tuple) -> float:
        if self.relative:
            ratios = [ei / bi if bi > 0 else 0.0 for ei, bi in zip(e, self.base)]
        else:
            ratios = list(e)
        if self.metric == "p":
            return ratios[0]
        if self.metric == "u":
            return ratios[1]
        return max(ratios[0], ratios[1])

    def relative_errors(self, k: int) -> tuple:
        e = self.errors[k]
        return tuple(ei / bi if bi > 0 else 0.0 for ei, bi in zip(e, self.base))

    def start(self, x0: np.ndarray) -> bool:
        self.base = tuple(self.errors_of(x0))
        self.errors[0] = self.base
        return self._scalar(self.base) <= self.tol and not self.relative

    def evaluate(self, k: int, x: np.ndarray) -> tuple:
        if k not in self.errors:
            self.errors[k] = tuple(self.errors_of(x))
        return self.errors[k]

    def observe(self, k: int, get_iterate: Callable[[int], np.ndarray], first_available: int = 0) -> bool:
        """Called after iteration ``k``; returns True when the tolerance has been met."""
        last = self.max_iters is not None and k >= self.max_iters
        if k % self.stride and not last:
            return False
        if self._scalar(self.evaluate(k, get_iterate(k))) > self.tol:
            return False
        lo = max(k - self.stride + 1, first_available, 1)
        for j in range(lo, k):
            if self._scalar(self.evaluate(j, get_iterate(j))) <= self.tol:
                self.hit = j
                return True
        self.hit = k
        return True

    def finish(self, k: int, get_iterate: Callable[[int], np.ndarray]) -> None:
        """Make sure the final iterate's error is recorded."""
        self.evaluate(k, get_iterate(k))

    def gmres_callback(self):
        def cb(monitor):
            return self.observe(monitor.iteration, monitor.iterate, monitor.first_available)
        return cb

    def series(self) -> dict:
        ks = sorted(self.errors)
        out = {"iter": np.array(ks)}
        names = ("err_p_matrix", "err_u_matrix", "err_p_fracture")
        for i, name in enumerate(names):
            out[name] = np.array([self.errors[k][i] for k in ks])
        return out
