"""Interface problem for the fracture pressure with Dirichlet-to-Neumann subdomain maps.

The unknown is the fracture pressure ``lambda`` on the fracture time grid,
stored as an ``(M_gamma, ny)`` array and flattened row-major for GMRES.  Each
row is written in integral form over its slab and segment (scaled by
``hy * dt_gamma``) so tolerances do not depend on the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .discretize import assemble_fracture_1d, fracture_node_fluxes, fracture_stiffness
from .linalg import GmresOptions, GmresResult, gmres
from .metrics import ErrorMonitor
from .monolithic import CoupledProblem, SpaceTimeSolution
from .subsolve import SubdomainOperator, map_subdomains
from .timegrid import Projection, TimeGrid, TraceFunction

PRECONDITIONERS = ("none", "local", "nn")


class SchurContext:
    """Subdomain Dirichlet/Neumann operators, projections and fracture data for one problem."""

    def __init__(self, prob: CoupledProblem, grid1: TimeGrid, grid2: TimeGrid, grid_gamma: TimeGrid,
                 precond: str = "none", sigma: Optional[tuple[float, float]] = None):
        if precond not in PRECONDITIONERS:
            raise ValueError(f"precond must be one of {PRECONDITIONERS}, got {precond!r}")
        self.prob = prob
        self.precond = precond
        self.grids = (grid1, grid2)
        self.grid_gamma = grid_gamma
        phys = prob.phys
        self.ops = tuple(
            SubdomainOperator(mesh, phys, g, "dirichlet", q=prob.source(mesh.index),
                              p0=prob.initial(mesh.index), endpoint=prob.endpoint)
            for mesh, g in zip(prob.meshes, self.grids))
        self.to_sub = tuple(Projection(grid_gamma, g) for g in self.grids)
        self.to_gamma = tuple(Projection(g, grid_gamma) for g in self.grids)
        frac = prob.frac
        self.ny = frac.ny
        self.hy = frac.hy
        self.stiffness, self.endpoint_rhs = fracture_stiffness(frac, phys.Kf_delta, prob.endpoint)
        self.storage = phys.s_gamma * frac.hy
        if sigma is None:
            sigma = (phys.K1 / (phys.K1 + phys.K2), phys.K2 / (phys.K1 + phys.K2))
        if abs(sum(sigma) - 1.0) > 1e-14 or min(sigma) < 0:
            raise ValueError(f"sigma weights must be nonnegative and sum to 1, got {sigma}")
        self.sigma = tuple(float(s) for s in sigma)
        self.executor = None
        self._local = None
        self._neumann = None
        self._rhs = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid_gamma.M, self.ny

    @property
    def size(self) -> int:
        return self.grid_gamma.M * self.ny

    def local_system(self):
        if self._local is None:
            self._local = assemble_fracture_1d(self.prob.frac, self.prob.phys, include_time_term=False,
                                               endpoint=self.prob.endpoint)
        return self._local

    def neumann_ops(self) -> tuple[SubdomainOperator, SubdomainOperator]:
        if self._neumann is None:
            self._neumann = tuple(SubdomainOperator(mesh, self.prob.phys, g, "neumann",
                                                    endpoint=self.prob.endpoint)
                                  for mesh, g in zip(self.prob.meshes, self.grids))
        return self._neumann

    def flux_sum(self, lam: np.ndarray, affine: bool = False) -> np.ndarray:
        """Sum over subdomains of projected outflow densities ``u_i.n_i`` on the fracture grid."""
        def one(op, down, up):
            return up(op.affine_output() if affine else op.apply(down(lam)))
        parts = map_subdomains(one, list(zip(self.ops, self.to_sub, self.to_gamma)), self.executor)
        return parts[0] + parts[1]

    def fracture_part(self, lam: np.ndarray) -> np.ndarray:
        dt = self.grid_gamma.dt
        prev = np.vstack([np.zeros((1, self.ny)), lam[:-1]])
        return self.storage * (lam - prev) + dt * (self.stiffness @ lam.T).T


def schur_apply(ctx: SchurContext, lam) -> np.ndarray:
    """Linear interface operator; accepts a TraceFunction or a flat vector, returns a flat vector."""
    L = lam.values if isinstance(lam, TraceFunction) else np.asarray(lam, dtype=float).reshape(ctx.shape)
    dt = ctx.grid_gamma.dt
    out = ctx.fracture_part(L) - dt * ctx.hy * ctx.flux_sum(L)
    return out.ravel()


def schur_rhs(ctx: SchurContext) -> np.ndarray:
    if ctx._rhs is None:
        dt = ctx.grid_gamma.dt
        rhs = dt * ctx.hy * ctx.flux_sum(None, affine=True)
        rhs += dt * ctx.endpoint_rhs[None, :]
        rhs[0] += ctx.storage * ctx.prob.pg_0
        ctx._rhs = rhs.ravel()
    return ctx._rhs


def precond_local(ctx: SchurContext, g) -> np.ndarray:
    """Steady fracture solve per slab with homogeneous endpoints."""
    G = g.values if isinstance(g, TraceFunction) else np.asarray(g, dtype=float).reshape(ctx.shape)
    sys = ctx.local_system()
    x = sys.solve(np.ascontiguousarray((G / ctx.grid_gamma.dt).T))
    return np.asarray(x).reshape(ctx.ny, -1).T.ravel()


def precond_nn(ctx: SchurContext, phi) -> np.ndarray:
    """Weighted sum of projected Neumann-to-Dirichlet maps of the residual read as an inflow density."""
    R = phi.values if isinstance(phi, TraceFunction) else np.asarray(phi, dtype=float).reshape(ctx.shape)
    density = R / (ctx.hy * ctx.grid_gamma.dt)
    def one(op, sig, down, up):
        return sig * up(op.apply(down(density)))
    parts = map_subdomains(one, list(zip(ctx.neumann_ops(), ctx.sigma, ctx.to_sub, ctx.to_gamma)),
                           ctx.executor)
    return (parts[0] + parts[1]).ravel()


def preconditioner(ctx: SchurContext) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    if ctx.precond == "local":
        return lambda r: precond_local(ctx, r)
    if ctx.precond == "nn":
        return lambda r: precond_nn(ctx, r)
    return None


def reconstruct(ctx: SchurContext, lam, affine: bool = True, fluxes: bool = True) -> SpaceTimeSolution:
    """Subdomain solutions for a given fracture pressure (one Dirichlet sweep each)."""
    L = lam.values if isinstance(lam, TraceFunction) else np.asarray(lam, dtype=float).reshape(ctx.shape)
    ps, Fs = [], []
    for op, down in zip(ctx.ops, ctx.to_sub):
        data = down(L)
        _, states = op.sweep(data, affine=affine, store=True)
        ps.append(states)
        Fs.append(op.fluxes(states, data, affine) if fluxes else None)
    Q = None
    if fluxes:
        Q = np.stack([fracture_node_fluxes(ctx.prob.frac, ctx.prob.phys.Kf_delta, row, affine, ctx.prob.endpoint)
                      for row in L])
    prob = ctx.prob
    zero = not affine
    return SpaceTimeSolution(
        ctx.grids[0], ctx.grids[1], ctx.grid_gamma, ps[0], ps[1], np.array(L, copy=True), Fs[0], Fs[1], Q,
        np.zeros_like(prob.p1_0) if zero else prob.p1_0.copy(),
        np.zeros_like(prob.p2_0) if zero else prob.p2_0.copy(),
        np.zeros_like(prob.pg_0) if zero else prob.pg_0.copy())


@dataclass
class InterfaceSolveResult:
    x: np.ndarray
    solution: Optional[SpaceTimeSolution]
    residuals: list
    n_iter: int
    converged: bool
    errors: dict = field(default_factory=dict)
    monitor: Optional[ErrorMonitor] = None
    gmres: Optional[GmresResult] = None
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        """Iterations to tolerance: first error-tolerance hit when monitored, else GMRES count."""
        if self.monitor is not None and self.monitor.hit is not None:
            return self.monitor.hit
        return self.n_iter


def solve_gtp(ctx: SchurContext, opts: Optional[GmresOptions] = None, x0: Optional[np.ndarray] = None,
              monitor: Optional[ErrorMonitor] = None, homogeneous: bool = False,
              build_solution: bool = True) -> InterfaceSolveResult:
    """GMRES on the fracture-pressure interface problem with the context's preconditioner.

    ``homogeneous=True`` drops the right-hand side and reconstructs without
    affine data (error-to-zero runs).  A supplied ``monitor`` stops the
    iteration by error instead of residual; its tolerance applies then.
    """
    opts = opts or GmresOptions()
    b = np.zeros(ctx.size) if homogeneous else schur_rhs(ctx)
    cb = None
    if monitor is not None:
        if x0 is None:
            raise ValueError("error monitoring needs an initial guess")
        monitor.start(np.asarray(x0, dtype=float))
        monitor.max_iters = opts.max_iters
        cb = monitor.gmres_callback()
        opts = GmresOptions(rel_tol=1e-300, max_iters=opts.max_iters, restart=opts.restart,
                            record_history=opts.record_history)
    res = gmres(lambda v: schur_apply(ctx, v), b, preconditioner(ctx), opts, x0=x0, callback=cb)
    sol = reconstruct(ctx, res.x, affine=not homogeneous) if build_solution else None
    converged = res.converged if monitor is None else monitor.hit is not None
    return InterfaceSolveResult(res.x, sol, res.residuals, res.n_iter, converged,
                                monitor.errors if monitor else {}, monitor, res)


def interface_from_solution(ctx: SchurContext, sol: SpaceTimeSolution) -> np.ndarray:
    """Fracture pressure of a coupled solution, as the interface unknown."""
    return np.asarray(sol.pg, dtype=float).ravel()


def homogeneous_error_fn(ctx: SchurContext) -> Callable[[np.ndarray], tuple]:
    """Error norms of the reconstruction of an iterate when the exact solution is zero."""
    from .metrics import solution_norms

    def errors_of(x):
        sol = reconstruct(ctx, x, affine=False)
        return solution_norms(sol, ctx.prob.meshes, ctx.prob.frac)
    return errors_of
