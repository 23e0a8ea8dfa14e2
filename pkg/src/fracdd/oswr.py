"""Optimized Schwarz waveform relaxation with Ventcell-to-Robin transmission.

Subdomain ``i`` receives Ventcell data ``theta_i`` and returns the Robin
value ``u_i.n_i + alpha p_{i,gamma}``; the data of one subdomain is the
projected Robin output of the other.  Both ``theta`` components live on the
fracture time grid; the stacked unknown is ``[theta_1, theta_2]`` flattened
row-major, ``2 * M_gamma * ny`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .discretize import fracture_node_fluxes
from .linalg import GmresOptions, gmres
from .metrics import ErrorMonitor, solution_norms
from .monolithic import CoupledProblem, SpaceTimeSolution
from .schur import InterfaceSolveResult
from .subsolve import SubdomainOperator, map_subdomains
from .timegrid import Projection, TimeGrid


class OswrContext:
    def __init__(self, prob: CoupledProblem, grid1: TimeGrid, grid2: TimeGrid, grid_gamma: TimeGrid,
                 alpha: float):
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha!r}")
        self.prob = prob
        self.alpha = float(alpha)
        self.grids = (grid1, grid2)
        self.grid_gamma = grid_gamma
        self.ops = tuple(
            SubdomainOperator(mesh, prob.phys, g, "ventcell", alpha=alpha, frac=prob.frac,
                              q=prob.source(mesh.index), p0=prob.initial(mesh.index), pg0=prob.pg_0,
                              endpoint=prob.endpoint)
            for mesh, g in zip(prob.meshes, self.grids))
        self.to_sub = tuple(Projection(grid_gamma, g) for g in self.grids)
        self.to_gamma = tuple(Projection(g, grid_gamma) for g in self.grids)
        self.ny = prob.frac.ny
        self.executor = None
        self._rhs = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid_gamma.M, self.ny

    @property
    def size(self) -> int:
        return 2 * self.grid_gamma.M * self.ny

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise ValueError(f"stacked data must have shape ({self.size},), got {x.shape}")
        half = self.size // 2
        return x[:half].reshape(self.shape), x[half:].reshape(self.shape)

    @staticmethod
    def stack(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
        return np.concatenate([np.ravel(t1), np.ravel(t2)])

    def robin(self, i: int, theta_i: np.ndarray, affine: bool) -> np.ndarray:
        """Robin output of subdomain ``i`` (0 or 1) for its own data, on the fracture grid."""
        op = self.ops[i]
        out = op.apply(self.to_sub[i](theta_i))
        if affine:
            out = out + op.affine_output()
        return self.to_gamma[i](out)

    def exchange(self, x, affine: bool) -> np.ndarray:
        """New data for both subdomains: each receives the other's projected Robin output."""
        t1, t2 = self.split(x)
        r2, r1 = map_subdomains(self.robin, [(1, t2, affine), (0, t1, affine)], self.executor)
        return self.stack(r2, r1)


def oswr_apply(ctx: OswrContext, x) -> np.ndarray:
    return np.asarray(x, dtype=float) - ctx.exchange(x, affine=False)


def oswr_rhs(ctx: OswrContext) -> np.ndarray:
    if ctx._rhs is None:
        a1 = ctx.to_gamma[0](ctx.ops[0].affine_output())
        a2 = ctx.to_gamma[1](ctx.ops[1].affine_output())
        ctx._rhs = ctx.stack(a2, a1)
    return ctx._rhs


def reconstruct(ctx: OswrContext, x, affine: bool = True, fluxes: bool = True) -> SpaceTimeSolution:
    """Ventcell sweeps with the given data.

    The fracture pressure on the fracture grid is the mean of the two
    projected subdomain copies ``p_{i,gamma}``; they agree at convergence on
    conforming grids.
    """
    prob = ctx.prob
    ps, Fs, pgs = [], [], []
    for i, theta in enumerate(ctx.split(x)):
        op = ctx.ops[i]
        data = ctx.to_sub[i](theta)
        _, states = op.sweep(data, affine=affine, store=True)
        n = op.mesh.n_cells
        ps.append(states[:, :n])
        pgs.append(ctx.to_gamma[i](states[:, n:]))
        Fs.append(op.fluxes(states, data, affine) if fluxes else None)
    pg = 0.5 * (pgs[0] + pgs[1])
    Q = None
    if fluxes:
        Q = np.stack([fracture_node_fluxes(prob.frac, prob.phys.Kf_delta, row, affine, prob.endpoint)
                      for row in pg])
    zero = not affine
    sol = SpaceTimeSolution(
        ctx.grids[0], ctx.grids[1], ctx.grid_gamma, ps[0], ps[1], pg, Fs[0], Fs[1], Q,
        np.zeros_like(prob.p1_0) if zero else prob.p1_0.copy(),
        np.zeros_like(prob.p2_0) if zero else prob.p2_0.copy(),
        np.zeros_like(prob.pg_0) if zero else prob.pg_0.copy())
    sol.info["pg_copies"] = tuple(pgs)
    return sol


def interface_from_solution(ctx: OswrContext, sol: SpaceTimeSolution) -> np.ndarray:
    """Ventcell data reproducing a coupled solution on conforming grids.

    Subdomain 1 receives ``u_2.n_2 + alpha p_gamma`` and vice versa, with the
    outflow densities taken from the same half-cell relation as the closures.
    """
    out = []
    for i in (1, 0):
        op = ctx.ops[i]
        p = sol.p1 if i == 0 else sol.p2
        un = op.system.T_iface * (p[:, op.mesh.interface_cells] - sol.pg) / op.mesh.hy
        out.append(un + ctx.alpha * sol.pg)
    return ctx.stack(out[0], out[1])


def homogeneous_error_fn(ctx: OswrContext):
    def errors_of(x):
        sol = reconstruct(ctx, x, affine=False)
        return solution_norms(sol, ctx.prob.meshes, ctx.prob.frac)
    return errors_of


@dataclass
class JacobiOptions:
    tol: float = 1e-6
    max_iters: int = 100
    damping: float = 1.0
    detect_divergence: bool = True
    divergence_window: int = 5


def solve_oswr_jacobi(ctx: OswrContext, opts: Optional[JacobiOptions] = None,
                      x0: Optional[np.ndarray] = None, monitor: Optional[ErrorMonitor] = None,
                      homogeneous: bool = False, build_solution: bool = True,
                      on_iterate: Optional[Callable[[int, np.ndarray], None]] = None) -> InterfaceSolveResult:
    """Fixed-point iteration ``theta <- (1-w) theta + w * exchange(theta)``.

    Without a monitor the stopping quantity is the relative update
    ``|theta^{k} - theta^{k-1}| / |theta^{k}|``; with one it is the monitor's
    error.  The stopping quantity growing over ``divergence_window``
    consecutive iterations flags divergence.  ``on_iterate(k, theta)`` is
    called after every iteration and does not affect stopping.
    """
    opts = opts or JacobiOptions()
    x = np.zeros(ctx.size) if x0 is None else np.array(x0, dtype=float)
    affine = not homogeneous
    w = opts.damping
    history = []
    window: dict[int, np.ndarray] = {0: x.copy()}
    if monitor is not None:
        monitor.start(x)
        monitor.max_iters = opts.max_iters
    residual_norm_b = np.linalg.norm(oswr_rhs(ctx)) if affine else 0.0
    converged = False
    diverged = False
    increases = 0
    prev_q = np.inf
    k = 0
    if monitor is None and affine and residual_norm_b == 0.0 and not np.any(x):
        converged = True
    while not converged and k < opts.max_iters:
        new = ctx.exchange(x, affine)
        if w != 1.0:
            new = (1.0 - w) * x + w * new
        k += 1
        norm_new = np.linalg.norm(new)
        update = np.linalg.norm(new - x) / norm_new if norm_new > 0 else 0.0
        x = new
        history.append(update)
        if on_iterate is not None:
            on_iterate(k, x)
        if monitor is not None:
            window[k] = x
            window.pop(k - monitor.stride, None)
            stop = monitor.observe(k, lambda j: window[j], k - monitor.stride + 1)
            q = monitor._scalar(monitor.errors[k]) if k in monitor.errors else None
        else:
            stop = update <= opts.tol
            q = update
        if stop:
            converged = True
            break
        if q is not None:
            increases = increases + 1 if q > prev_q else 0
            prev_q = q
        if opts.detect_divergence and increases >= opts.divergence_window:
            diverged = True
            break
    sol = reconstruct(ctx, x, affine=affine) if build_solution else None
    res = InterfaceSolveResult(x, sol, history, k, converged,
                               monitor.errors if monitor else {}, monitor)
    res.extra["diverged"] = diverged
    return res


def solve_oswr_gmres(ctx: OswrContext, opts: Optional[GmresOptions] = None,
                     x0: Optional[np.ndarray] = None, monitor: Optional[ErrorMonitor] = None,
                     homogeneous: bool = False, build_solution: bool = True) -> InterfaceSolveResult:
    opts = opts or GmresOptions()
    b = np.zeros(ctx.size) if homogeneous else oswr_rhs(ctx)
    cb = None
    if monitor is not None:
        if x0 is None:
            raise ValueError("error monitoring needs an initial guess")
        monitor.start(np.asarray(x0, dtype=float))
        monitor.max_iters = opts.max_iters
        cb = monitor.gmres_callback()
        opts = GmresOptions(rel_tol=1e-300, max_iters=opts.max_iters, restart=opts.restart,
                            record_history=opts.record_history)
    res = gmres(lambda v: oswr_apply(ctx, v), b, None, opts, x0=x0, callback=cb)
    sol = reconstruct(ctx, res.x, affine=not homogeneous) if build_solution else None
    converged = res.converged if monitor is None else monitor.hit is not None
    return InterfaceSolveResult(res.x, sol, res.residuals, res.n_iter, converged,
                                monitor.errors if monitor else {}, monitor, res)
