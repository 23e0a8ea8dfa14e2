"""Scenario execution: build the problem from a config, run one method, write the outputs."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import oswr, schur
from ..discretize import PhysicalData
from ..geometry import BoundarySegment, build_meshes, boundary_segments
from ..linalg import GmresOptions
from ..metrics import ErrorMonitor, ErrorReport, compute_errors, solution_norms
from ..monolithic import CoupledProblem, SpaceTimeSolution, solve_monolithic
from ..symbol import FreqBox, SymbolParams, alpha_scan, default_alpha_range, optimize_alpha
from ..timegrid import TimeGrid
from . import io
from .config import ScenarioConfig

ERROR_NAMES = ("err_p_matrix", "err_u_matrix", "err_p_fracture")
# (M_matrix, M_fracture) per time grid of the nonconforming study
STUDY_GRIDS = {1: (100, 100), 2: (100, 500), 3: (500, 500)}
STUDY_METHODS = ("gtp_local", "gtp_nn", "gto_gmres")
REFERENCE_M = 2000


class NonConvergence(RuntimeError):
    pass


@dataclass
class RunResult:
    config: ScenarioConfig
    report: ErrorReport
    iterations: int
    converged: bool
    alpha: Optional[float]
    max_rho: Optional[float]
    wall_time: float
    solution: Optional[SpaceTimeSolution]
    history: list = field(default_factory=list)
    files: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# problem setup -----------------------------------------------------------------

def time_grids(cfg: ScenarioConfig) -> tuple[TimeGrid, TimeGrid, TimeGrid]:
    return TimeGrid(cfg.T, cfg.M1), TimeGrid(cfg.T, cfg.M2), TimeGrid(cfg.T, cfg.M_gamma)


def physical_data(cfg: ScenarioConfig) -> PhysicalData:
    return PhysicalData(s1=cfg.s1, s2=cfg.s2, K1=cfg.K1, K2=cfg.K2, s_gamma=cfg.s_gamma,
                        Kf_delta=cfg.Kf_delta, delta=cfg.delta)


def build_problem(cfg: ScenarioConfig, grid: Optional[TimeGrid] = None) -> CoupledProblem:
    """Meshes, boundary data, sources and initial states; all data zero for error-to-zero runs."""
    m1, m2, frac = build_meshes(cfg.domain)
    segs = cfg.boundary()
    zero = cfg.homogeneous
    if zero:
        segs = [BoundarySegment(s.side, s.lo, s.hi, s.kind, 0.0) for s in segs]
    m1 = boundary_segments(m1, segs)
    m2 = boundary_segments(m2, segs)
    frac = frac.with_endpoints(0.0 if zero else cfg.fracture_bottom, 0.0 if zero else cfg.fracture_top)
    scale = 0.0 if zero else 1.0
    return CoupledProblem(
        m1, m2, frac, physical_data(cfg), grid or TimeGrid(cfg.T, cfg.M1),
        q1=np.full(m1.n_cells, scale * cfg.q1), q2=np.full(m2.n_cells, scale * cfg.q2),
        p1_0=np.full(m1.n_cells, scale * cfg.p0), p2_0=np.full(m2.n_cells, scale * cfg.p0),
        pg_0=np.full(frac.ny, scale * cfg.p0_gamma), endpoint=cfg.endpoint)


def symbol_params(cfg: ScenarioConfig) -> SymbolParams:
    return SymbolParams(s_minus=cfg.s1, K_minus=cfg.K1, s_plus=cfg.s2, K_plus=cfg.K2,
                        s_gamma=cfg.s_gamma, Kf_delta=cfg.Kf_delta)


def frequency_box(cfg: ScenarioConfig) -> FreqBox:
    """Frequencies resolved by the fracture mesh and the coarsest of the three time grids."""
    dt = max(g.dt for g in time_grids(cfg))
    return FreqBox.from_discretization(cfg.Ly, cfg.Ly / cfg.ny, cfg.T, dt, cfg.n_eta, cfg.n_omega)


def choose_alpha(cfg: ScenarioConfig) -> tuple[float, float]:
    """``(alpha, max convergence factor over the box)`` for the configured alpha mode."""
    params, box = symbol_params(cfg), frequency_box(cfg)
    explicit = cfg.alpha_value()
    if explicit is not None:
        from ..symbol import max_factor
        return explicit, float(max_factor(params, box, explicit))
    return optimize_alpha(params, box, cfg.alpha_lo, cfg.alpha_hi)


def initial_guess(cfg: ScenarioConfig, size: int) -> np.ndarray:
    if cfg.initial_guess == "zero":
        return np.zeros(size)
    rng = np.random.default_rng(cfg.seed)
    if cfg.random_distribution == "uniform01":
        return rng.uniform(0.0, 1.0, size)
    if cfg.random_distribution == "uniform_pm1":
        return rng.uniform(-1.0, 1.0, size)
    return rng.standard_normal(size)


def make_context(cfg: ScenarioConfig, prob: CoupledProblem, alpha: Optional[float] = None):
    g1, g2, gg = time_grids(cfg)
    if cfg.is_gto:
        return oswr.OswrContext(prob, g1, g2, gg, alpha)
    return schur.SchurContext(prob, g1, g2, gg, cfg.method.split("_", 1)[1])


def _module(cfg: ScenarioConfig):
    return oswr if cfg.is_gto else schur


# running -------------------------------------------------------------------------

def _reference_for(cfg: ScenarioConfig, reference: Optional[SpaceTimeSolution]):
    """Explicit reference, else the file named in the config, else the monolithic solution
    on the common grid of a time-conforming run."""
    if reference is not None:
        return reference
    if cfg.reference:
        return io.read_reference(cfg.reference)
    if cfg.method != "monolithic" and cfg.M1 == cfg.M2 == cfg.M_gamma:
        return solve_monolithic(build_problem(cfg))
    return None


def _nan_report() -> ErrorReport:
    return ErrorReport(float("nan"), float("nan"), float("nan"))


def solve_scenario(cfg: ScenarioConfig, reference: Optional[SpaceTimeSolution] = None,
                   threads: int = 1, record_errors: bool = True) -> RunResult:
    """Run one configured method; no files are written.

    Error-to-zero runs stop on the error of the reconstructed solution
    (relative to iterate 0, metric ``stop_metric``); driven runs stop on the
    GMRES relative residual or the Jacobi relative update and record the
    error against a reference every ``error_stride`` iterations.
    """
    cfg.validate()
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    if cfg.method == "monolithic":
        sol = solve_monolithic(prob)
        ref = io.read_reference(cfg.reference) if cfg.reference else None
        rep = compute_errors(sol, ref, prob.meshes, prob.frac) if ref is not None else _nan_report()
        return RunResult(cfg, rep, 0, True, None, None, time.perf_counter() - t0, sol)

    alpha = max_rho = None
    if cfg.is_gto:
        alpha, max_rho = choose_alpha(cfg)
    ctx = make_context(cfg, prob, alpha)
    mod = _module(cfg)
    x0 = initial_guess(cfg, ctx.size)
    pool = ThreadPoolExecutor(max_workers=2) if threads > 1 else None
    ctx.executor = pool
    try:
        if cfg.homogeneous:
            res, rows = _run_error_to_zero(cfg, ctx, mod, x0)
        else:
            ref = _reference_for(cfg, reference) if record_errors else None
            res, rows = _run_driven(cfg, ctx, mod, x0, ref, prob)
    finally:
        if pool is not None:
            pool.shutdown()
    sol = res.solution
    if cfg.homogeneous:
        last = max(res.errors)
        rep = ErrorReport(*res.errors[last])
    else:
        rep = res.extra.get("final_report", _nan_report())
    rep.series = {"rows": rows}
    out = RunResult(cfg, rep, res.iterations, res.converged, alpha, max_rho,
                    time.perf_counter() - t0, sol, rows)
    out.extra.update(res.extra)
    out.extra["n_iter"] = res.n_iter
    return out


def _gmres_options(cfg: ScenarioConfig) -> GmresOptions:
    return GmresOptions(rel_tol=cfg.tol, max_iters=cfg.max_iters, restart=cfg.restart)


def _jacobi_options(cfg: ScenarioConfig) -> oswr.JacobiOptions:
    return oswr.JacobiOptions(tol=cfg.tol, max_iters=cfg.max_iters, damping=cfg.damping)


def _solve(cfg, ctx, mod, x0, monitor=None, homogeneous=False, callback=None):
    if callback is not None:
        callback(0, x0)
    if cfg.method == "gto_jacobi":
        return oswr.solve_oswr_jacobi(ctx, _jacobi_options(cfg), x0=x0, monitor=monitor,
                                      homogeneous=homogeneous, on_iterate=callback)
    opts = _gmres_options(cfg)
    if cfg.is_gto:
        solver = oswr.solve_oswr_gmres
    else:
        solver = schur.solve_gtp
    if callback is None:
        return solver(ctx, opts, x0=x0, monitor=monitor, homogeneous=homogeneous)
    # driven runs: record through a non-stopping GMRES callback
    from ..linalg import gmres
    apply = (lambda v: oswr.oswr_apply(ctx, v)) if cfg.is_gto else (lambda v: schur.schur_apply(ctx, v))
    b = oswr.oswr_rhs(ctx) if cfg.is_gto else schur.schur_rhs(ctx)
    M_inv = None if cfg.is_gto else schur.preconditioner(ctx)

    def cb(mon):
        callback(mon.iteration, mon.iterate(mon.iteration))
        return False
    g = gmres(apply, b, M_inv, opts, x0=x0, callback=cb)
    sol = mod.reconstruct(ctx, g.x, affine=True)
    return schur.InterfaceSolveResult(g.x, sol, g.residuals, g.n_iter, g.converged, {}, None, g)


def _run_error_to_zero(cfg, ctx, mod, x0):
    mon = ErrorMonitor(mod.homogeneous_error_fn(ctx), cfg.tol, stride=cfg.error_stride,
                       metric=cfg.stop_metric)
    res = _solve(cfg, ctx, mod, x0, monitor=mon, homogeneous=True)
    if res.n_iter not in mon.errors and res.solution is not None:
        mon.errors[res.n_iter] = solution_norms(res.solution, ctx.prob.meshes, ctx.prob.frac)
    rows = []
    resid = res.residuals
    for k in sorted(mon.errors):
        e = mon.errors[k]
        rel = mon.relative_errors(k)
        row = {"iter": k, "rel_residual": _residual_at(cfg, resid, k)}
        row.update(dict(zip(ERROR_NAMES, e)))
        row.update({f"{n}_rel": r for n, r in zip(ERROR_NAMES, rel)})
        rows.append(row)
    return res, rows


def _residual_at(cfg, resid, k):
    if cfg.method == "gto_jacobi":
        return resid[k - 1] if 1 <= k <= len(resid) else None
    return resid[k] if k < len(resid) else None


def _run_driven(cfg, ctx, mod, x0, ref, prob):
    errors: dict[int, tuple] = {}
    stride = cfg.error_stride

    def record(k, x):
        if ref is not None and k % stride == 0:
            sol = mod.reconstruct(ctx, x, affine=True, fluxes=ref.has_fluxes)
            errors[k] = compute_errors(sol, ref, prob.meshes, prob.frac).as_tuple()

    res = _solve(cfg, ctx, mod, x0, callback=record if ref is not None else None)
    if ref is not None:
        final = compute_errors(res.solution, ref, prob.meshes, prob.frac)
        errors[res.n_iter] = final.as_tuple()
        res.extra["final_report"] = final
    rows = []
    resid = res.residuals
    n_rows = res.n_iter + 1
    for k in range(n_rows):
        row = {"iter": k, "rel_residual": _residual_at(cfg, resid, k)}
        if k in errors:
            row.update(dict(zip(ERROR_NAMES, errors[k])))
        rows.append(row)
    return res, rows


# outputs ---------------------------------------------------------------------------

def write_outputs(result: RunResult, out_dir: str) -> list[str]:
    cfg = result.config
    os.makedirs(out_dir, exist_ok=True)
    files = []
    extra_cols = ("alpha",) if cfg.is_gto else ()
    rows = [dict(r, alpha=result.alpha) for r in result.history]
    hist = os.path.join(out_dir, "history.csv")
    io.write_history(hist, rows, extra_cols)
    files.append(hist)
    if cfg.homogeneous:
        norm_rows = [{"iter": r["iter"], "rel_residual": r["rel_residual"],
                      **{n: r[f"{n}_rel"] for n in ERROR_NAMES}, "alpha": result.alpha} for r in rows]
        path = os.path.join(out_dir, "history_normalized.csv")
        io.write_history(path, norm_rows, extra_cols)
        files.append(path)
    dat = os.path.join(out_dir, "history.dat")
    cols = list(io.HISTORY_COLUMNS)
    io.write_dat(dat, cols, [[r.get(c) if r.get(c) is not None else float("nan") for c in cols]
                             for r in rows])
    files.append(dat)
    summary = os.path.join(out_dir, "summary.csv")
    rep = result.report
    io.write_table(summary, ["method", "scenario", "iterations", "converged", "err_p_matrix",
                             "err_u_matrix", "err_p_fracture", "alpha", "max_rho", "wall_time"],
                   [[cfg.method, cfg.scenario, result.iterations, str(result.converged).lower(),
                     rep.err_p_matrix, rep.err_u_matrix, rep.err_p_fracture,
                     "" if result.alpha is None else result.alpha,
                     "" if result.max_rho is None else result.max_rho, result.wall_time]])
    files.append(summary)
    if cfg.write_fields and result.solution is not None:
        files += write_snapshots(result.solution, build_problem(cfg), cfg.times(), out_dir)
    result.files = files
    return files


def write_snapshots(sol: SpaceTimeSolution, prob: CoupledProblem, times: list[float], out_dir: str) -> list[str]:
    """Pressure fields, edge fluxes and fracture data on the slab ending at or after each time."""
    files = []
    for n, t in enumerate(times):
        for idx, mesh, grid, p, F in ((1, prob.m1, sol.grid1, sol.p1, sol.F1),
                                      (2, prob.m2, sol.grid2, sol.p2, sol.F2)):
            m = grid.slab_of(t)
            tm = grid.times[m + 1]
            path = os.path.join(out_dir, f"snapshot{n}_p{idx}.txt")
            io.write_field(path, p[m], mesh.nx, mesh.ny, mesh.hx, mesh.hy, tm)
            files.append(path)
            if F is not None:
                path = os.path.join(out_dir, f"snapshot{n}_flux{idx}.csv")
                io.write_flux_csv(path, mesh, F[m], tm)
                files.append(path)
        m = sol.grid_gamma.slab_of(t)
        path = os.path.join(out_dir, f"snapshot{n}_fracture.csv")
        io.write_fracture_csv(path, prob.frac, sol.pg[m], None if sol.Q is None else sol.Q[m],
                              prob.phys.delta, sol.grid_gamma.times[m + 1])
        files.append(path)
    return files


def run(cfg: ScenarioConfig, out_dir: Optional[str] = None, threads: int = 1,
        reference: Optional[SpaceTimeSolution] = None) -> RunResult:
    """Solve and write history, summary and snapshot files under ``out_dir`` (default ``cfg.dir``)."""
    result = solve_scenario(cfg, reference=reference, threads=threads)
    write_outputs(result, out_dir or cfg.dir)
    return result


# studies -----------------------------------------------------------------------------

def reference_solution(cfg: ScenarioConfig, M: int = REFERENCE_M) -> SpaceTimeSolution:
    """Monolithic solution on a uniform fine time grid, pressures only."""
    prob = build_problem(cfg.with_(M1=M, M2=M, M_gamma=M, scenario="driven"), TimeGrid(cfg.T, M))
    return solve_monolithic(prob, store_fluxes=False)


def time_grid_study(cfg: ScenarioConfig, reference: Optional[SpaceTimeSolution] = None,
                    methods=STUDY_METHODS, grids=None, out_dir: Optional[str] = None,
                    threads: int = 1, record_errors: bool = True) -> list[dict]:
    """Driven runs for each (method, time grid); zero initial guess, residual stopping.

    Returns one row per run with the iteration count and the final errors
    against the fine reference.
    """
    grids = grids or STUDY_GRIDS
    base = cfg.with_(scenario="driven", initial_guess="zero", reference="")
    if reference is None:
        reference = io.read_reference(cfg.reference) if cfg.reference else reference_solution(base)
    table = []
    for method in methods:
        for gid, (Mm, Mf) in grids.items():
            c = base.with_(method=method, M1=Mm, M2=Mm, M_gamma=Mf)
            if not record_errors:
                c = c.with_(error_stride=10 ** 9)
            res = solve_scenario(c, reference=reference, threads=threads)
            rep = res.report
            row = {"method": method, "grid": gid, "M_matrix": Mm, "M_fracture": Mf,
                   "iterations": res.iterations, "converged": res.converged,
                   "err_p_matrix": rep.err_p_matrix, "err_p_fracture": rep.err_p_fracture,
                   "alpha": res.alpha, "wall_time": res.wall_time, "history": res.history}
            table.append(row)
            if out_dir:
                os.makedirs(out_dir, exist_ok=True)
                io.write_history(os.path.join(out_dir, f"history_{method}_grid{gid}.csv"),
                                 [dict(r, alpha=res.alpha) for r in res.history],
                                 ("alpha",) if c.is_gto else ())
    if out_dir:
        header = ["method", "grid", "M_matrix", "M_fracture", "iterations", "converged",
                  "err_p_matrix", "err_p_fracture", "alpha", "wall_time"]
        body = [[r[h] if h != "converged" else str(r[h]).lower() for h in header] for r in table]
        body = [["" if v is None else v for v in row] for row in body]
        io.write_table(os.path.join(out_dir, "time_grid_study.csv"), header, body)
        io.write_dat(os.path.join(out_dir, "time_grid_study.dat"), header,
                     [[str(v) for v in row] for row in body])
    return table


def alpha_scan_table(cfg: ScenarioConfig, n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    params, box = symbol_params(cfg), frequency_box(cfg)
    lo, hi = default_alpha_range(params, box)
    return alpha_scan(params, box, cfg.alpha_lo or lo, cfg.alpha_hi or hi, n)


def empirical_alpha_sweep(cfg: ScenarioConfig, alphas, n_iter: int = 10) -> np.ndarray:
    """Absolute error norms after ``n_iter`` Jacobi iterations of the error-to-zero problem, per alpha.

    Returns an array of shape ``(len(alphas), 3)`` with columns
    ``err_p_matrix, err_u_matrix, err_p_fracture``.
    """
    c = cfg.with_(method="gto_jacobi", scenario="error_to_zero", initial_guess="random")
    prob = build_problem(c)
    out = []
    for a in alphas:
        ctx = make_context(c, prob, float(a))
        x0 = initial_guess(c, ctx.size)
        res = oswr.solve_oswr_jacobi(ctx, oswr.JacobiOptions(tol=0.0, max_iters=n_iter, detect_divergence=False),
                                     x0=x0, homogeneous=True)
        out.append(solution_norms(res.solution, prob.meshes, prob.frac))
    return np.array(out)
