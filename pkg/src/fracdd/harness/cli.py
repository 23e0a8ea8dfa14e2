"""Command line entry point: ``fracdd <subcommand> [--config PATH] [--out DIR] [--seed N] [--threads N]``."""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from . import io
from .config import ConfigError, ScenarioConfig, dump_config, load_config
from .run import (REFERENCE_M, alpha_scan_table, choose_alpha, empirical_alpha_sweep, reference_solution,
                  run, time_grid_study)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI scenario file (defaults reproduce the driven case)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, help="seed of the random initial guess")
    common.add_argument("--threads", type=int, default=1, help="run the two subdomain sweeps concurrently when > 1")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, repeatable")

    p = argparse.ArgumentParser(prog="fracdd", description="Space-time domain decomposition for a fractured porous medium.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run one scenario")
    sub.add_parser("optimize-alpha", parents=[common], help="minimize the convergence factor over alpha")
    sub.add_parser("time-grid-study", parents=[common], help="three methods on three time grids against a fine reference")
    scan = sub.add_parser("alpha-scan", parents=[common], help="convergence factor (and optionally Jacobi errors) versus alpha")
    scan.add_argument("--points", type=int, default=64)
    scan.add_argument("--empirical", type=int, default=0, metavar="N_ALPHA",
                      help="also run N_ALPHA error-to-zero Jacobi sweeps")
    scan.add_argument("--iterations", type=int, default=10, help="Jacobi iterations per empirical alpha")
    ref = sub.add_parser("reference", parents=[common], help="fine-grid monolithic solution in portable text format")
    ref.add_argument("--steps", type=int, default=REFERENCE_M)
    ref.add_argument("--name", default="reference.txt.gz")
    sub.add_parser("show-config", parents=[common], help="print the resolved configuration")
    return p


def _overrides(args) -> dict:
    from .config import _convert
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            out[key] = _convert(key, raw)
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None
    if args.seed is not None:
        out["seed"] = args.seed
    if args.out:
        out["dir"] = args.out
    return out


def _config(args) -> ScenarioConfig:
    over = _overrides(args)
    if args.config:
        return load_config(args.config, over)
    cfg = ScenarioConfig()
    try:
        cfg = cfg.with_(**over)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.dir
    cmd = args.command

    if cmd == "show-config":
        print(dump_config(cfg))
        return EXIT_OK

    if cmd == "solve":
        res = run(cfg, out, threads=args.threads)
        rep = res.report
        print(f"{cfg.method} {cfg.scenario}: iterations={res.iterations} converged={res.converged} "
              f"err_p_matrix={rep.err_p_matrix:.6e} err_u_matrix={rep.err_u_matrix:.6e} "
              f"err_p_fracture={rep.err_p_fracture:.6e}"
              + (f" alpha={res.alpha:.6g}" if res.alpha is not None else "")
              + f" time={res.wall_time:.2f}s")
        return EXIT_OK if res.converged else EXIT_NONCONVERGENCE

    if cmd == "optimize-alpha":
        alpha, val = choose_alpha(cfg.with_(alpha="optimized"))
        os.makedirs(out, exist_ok=True)
        io.write_table(os.path.join(out, "alpha.csv"), ["alpha", "max_rho"], [[alpha, val]])
        print(f"alpha={alpha:.10g} max_rho={val:.6e}")
        return EXIT_OK

    if cmd == "alpha-scan":
        alphas, vals = alpha_scan_table(cfg, args.points)
        os.makedirs(out, exist_ok=True)
        io.write_table(os.path.join(out, "alpha_scan.csv"), ["alpha", "max_rho"], zip(alphas, vals))
        io.write_dat(os.path.join(out, "alpha_scan.dat"), ["alpha", "max_rho"], zip(alphas, vals))
        if args.empirical:
            emp = np.geomspace(alphas[0], alphas[-1], args.empirical)
            errs = empirical_alpha_sweep(cfg, emp, args.iterations)
            rows = [[a, *e] for a, e in zip(emp, errs)]
            header = ["alpha", "err_p_matrix", "err_u_matrix", "err_p_fracture"]
            io.write_table(os.path.join(out, "alpha_empirical.csv"), header, rows)
            io.write_dat(os.path.join(out, "alpha_empirical.dat"), header, rows)
        print(f"wrote {out}/alpha_scan.csv")
        return EXIT_OK

    if cmd == "time-grid-study":
        table = time_grid_study(cfg, out_dir=out, threads=args.threads)
        for r in table:
            print(f"{r['method']:10s} grid {r['grid']}: iterations={r['iterations']:4d} "
                  f"err_p_matrix={r['err_p_matrix']:.4e} err_p_fracture={r['err_p_fracture']:.4e}")
        return EXIT_OK if all(r["converged"] for r in table) else EXIT_NONCONVERGENCE

    if cmd == "reference":
        sol = reference_solution(cfg, args.steps)
        path = os.path.join(out, args.name)
        io.write_reference(path, sol)
        print(f"wrote {path}")
        return EXIT_OK
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
