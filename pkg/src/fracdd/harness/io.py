"""Plain-text outputs: field snapshots, flux tables, iteration histories, summaries, reference solutions."""

from __future__ import annotations

import csv
import gzip
import os
from typing import Iterable, Optional

import numpy as np

from ..geometry import FractureMesh, SubdomainMesh
from ..monolithic import SpaceTimeSolution
from ..timegrid import TimeGrid

HISTORY_COLUMNS = ("iter", "rel_residual", "err_p_matrix", "err_u_matrix", "err_p_fracture")
REFERENCE_MAGIC = "# fracdd reference solution v1"


def write_field(path: str, values: np.ndarray, nx: int, ny: int, hx: float, hy: float, t: float) -> None:
    """Cell field: header ``nx ny hx hy t`` then ``ny`` rows of ``nx`` values (row ``iy``, bottom first)."""
    grid = np.asarray(values, dtype=float).reshape(ny, nx)
    with open(path, "w") as fh:
        fh.write(f"{int(nx)} {int(ny)} {float(hx)!r} {float(hy)!r} {float(t)!r}\n")
        np.savetxt(fh, grid, fmt="%.17g")


def read_field(path: str) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        head = fh.readline().split()
        data = np.loadtxt(fh, ndmin=2)
    meta = {"nx": int(head[0]), "ny": int(head[1]), "hx": float(head[2]), "hy": float(head[3]),
            "t": float(head[4])}
    return data.reshape(meta["ny"], meta["nx"]), meta


def write_flux_csv(path: str, mesh: SubdomainMesh, F: np.ndarray, t: float) -> None:
    """Edge table: midpoint, reference normal, integrated flux and normal velocity."""
    nV = mesh.n_vertical
    e = np.arange(mesh.n_edges)
    xm = np.empty(mesh.n_edges)
    ym = np.empty(mesh.n_edges)
    ixe, iy = np.divmod(e[:nV], mesh.ny)
    xm[:nV] = mesh.x0 + ixe * mesh.hx
    ym[:nV] = (iy + 0.5) * mesh.hy
    iye, ix = np.divmod(e[nV:] - nV, mesh.nx)
    xm[nV:] = mesh.x0 + (ix + 0.5) * mesh.hx
    ym[nV:] = iye * mesh.hy
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "normal", "x", "y", "flux", "velocity", "t"])
        for k in range(mesh.n_edges):
            w.writerow([k, "x" if k < nV else "y", repr(xm[k]), repr(ym[k]), repr(F[k]),
                        repr(F[k] / mesh.edge_length[k]), repr(t)])


def write_fracture_csv(path: str, frac: FractureMesh, pg: np.ndarray, Q: Optional[np.ndarray],
                       delta: float, t: float) -> None:
    """Fracture segments (pressure) and nodes (flux, mean velocity across the width)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", "y", "value", "velocity", "t"])
        for k in range(frac.ny):
            w.writerow(["pressure", k, repr(0.5 * (frac.nodes[k] + frac.nodes[k + 1])), repr(pg[k]), "", repr(t)])
        if Q is not None:
            for j in range(frac.ny + 1):
                w.writerow(["flux", j, repr(frac.nodes[j]), repr(Q[j]), repr(Q[j] / delta), repr(t)])


def write_history(path: str, rows: Iterable[dict], extra: tuple[str, ...] = ()) -> None:
    cols = HISTORY_COLUMNS + tuple(extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow(["" if row.get(c) is None else _fmt(row.get(c)) for c in cols])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and np.isnan(v):
        return ""
    return repr(float(v))


def write_table(path: str, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool)
                        else v for v in row])


def write_dat(path: str, header: list[str], rows: Iterable[list]) -> None:
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot."""
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _open(path: str, mode: str):
    return gzip.open(path, mode + "t") if path.endswith(".gz") else open(path, mode)


def write_reference(path: str, sol: SpaceTimeSolution) -> None:
    """Text format: magic line, ``T M``, then blocks ``name rows cols`` followed by rows of floats."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with _open(path, "w") as fh:
        fh.write(REFERENCE_MAGIC + "\n")
        fh.write(f"{float(sol.grid.T)!r} {sol.grid.M}\n")
        blocks = [("p1_0", sol.p1_0[None]), ("p2_0", sol.p2_0[None]), ("pg_0", sol.pg_0[None]),
                  ("p1", sol.p1), ("p2", sol.p2), ("pg", sol.pg)]
        for name, arr in blocks:
            fh.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n")
            np.savetxt(fh, arr, fmt="%.17g")


def read_reference(path: str) -> SpaceTimeSolution:
    with _open(path, "r") as fh:
        if fh.readline().strip() != REFERENCE_MAGIC:
            raise ValueError(f"{path} is not a reference solution file")
        T, M = fh.readline().split()
        grid = TimeGrid(float(T), int(M))
        blocks = {}
        while True:
            line = fh.readline()
            if not line:
                break
            name, rows, cols = line.split()
            rows, cols = int(rows), int(cols)
            data = np.array([np.array(fh.readline().split(), dtype=float) for _ in range(rows)])
            blocks[name] = data.reshape(rows, cols)
    return SpaceTimeSolution(grid, grid, grid, blocks["p1"], blocks["p2"], blocks["pg"],
                             p1_0=blocks["p1_0"][0], p2_0=blocks["p2_0"][0], pg_0=blocks["pg_0"][0])
