"""Uniform time partitions and piecewise-constant L2 projections between them.

Slab ``m`` (0-based) of a grid with ``M`` slabs is ``(m*T/M, (m+1)*T/M]``.
Overlaps between two uniform grids of the same horizon are computed in the
integer unit ``T / (M_a * M_b)`` so the projection weights are exact
rationals; floats only appear when the weights are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.sparse as sps


class TimeGridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise TimeGridError(f"M must be a positive integer, got {self.M!r}")
        if not self.T > 0:
            raise TimeGridError(f"T must be positive, got {self.T!r}")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        """Slab end points ``t_0 = 0, ..., t_M = T``."""
        return self.T * np.arange(self.M + 1) / self.M

    def slab_of(self, t: float) -> int:
        """Index of the slab ``(t_{m-1}, t_m]`` containing ``t`` (``t=0`` maps to slab 0)."""
        m = int(np.ceil(t / self.T * self.M - 1e-9)) - 1
        return min(max(m, 0), self.M - 1)


def _check_horizon(a: TimeGrid, b: TimeGrid) -> None:
    if abs(a.T - b.T) > 1e-12 * max(a.T, b.T):
        raise TimeGridError(f"time grids have different final times {a.T} and {b.T}")


def overlap_counts(src: TimeGrid, dst: TimeGrid) -> sps.csr_matrix:
    """Integer overlap lengths ``W[m, n] = |J^dst_m  ∩  J^src_n|`` in units of ``T/(M_src*M_dst)``.

    Every row sums to ``M_src`` (the length of a destination slab in these units).
    """
    _check_horizon(src, dst)
    Ms, Md = src.M, dst.M
    rows, cols, vals = [], [], []
    # destination slab m covers [m*Ms, (m+1)*Ms); source slab n covers [n*Md, (n+1)*Md)
    for m in range(Md):
        lo, hi = m * Ms, (m + 1) * Ms
        n_first, n_last = lo // Md, (hi - 1) // Md
        for n in range(n_first, n_last + 1):
            ov = min(hi, (n + 1) * Md) - max(lo, n * Md)
            if ov > 0:
                rows.append(m)
                cols.append(n)
                vals.append(ov)
    return sps.csr_matrix((np.array(vals, dtype=np.int64), (rows, cols)), shape=(Md, Ms))


def projection_matrix(src: TimeGrid, dst: TimeGrid) -> sps.csr_matrix:
    """Matrix of the L2 projection ``P0(src) -> P0(dst)`` (slab averages)."""
    counts = overlap_counts(src, dst)
    out = counts.astype(float)
    out.data /= src.M
    return out


def overlap_lengths(a: TimeGrid, b: TimeGrid) -> sps.csr_matrix:
    """Physical overlap lengths ``|J^a_m ∩ J^b_n|`` as an ``(M_a, M_b)`` matrix."""
    counts = overlap_counts(b, a).astype(float)
    counts.data *= a.T / (a.M * b.M)
    return counts


def common_refinement(a: TimeGrid, b: TimeGrid) -> TimeGrid:
    """Coarsest uniform grid refining both (uniform grids share lcm(M_a, M_b) breakpoints)."""
    _check_horizon(a, b)
    return TimeGrid(a.T, a.M * b.M // gcd(a.M, b.M))


@dataclass(frozen=True, eq=False)
class TraceFunction:
    """Function on the fracture, piecewise constant in time and in space.

    ``values[m, k]`` is the value on time slab ``m`` and fracture segment ``k``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.M:
            raise TimeGridError(
                f"values must have shape (M={self.grid.M}, n_space), got {np.shape(self.values)}"
            )
        object.__setattr__(self, "values", v)

    @property
    def n_space(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, n_space: int) -> "TraceFunction":
        return cls(grid, np.zeros((grid.M, n_space)))

    def time_integral(self) -> np.ndarray:
        return self.grid.dt * self.values.sum(axis=0)

    def l2_norm(self, hy: float = 1.0) -> float:
        return float(np.sqrt(self.grid.dt * hy * np.sum(self.values ** 2)))


def project(src: TraceFunction, dst_grid: TimeGrid) -> TraceFunction:
    """L2 projection of ``src`` onto ``dst_grid``: the average over each destination slab."""
    if src.grid == dst_grid:
        return TraceFunction(dst_grid, src.values.copy())
    return TraceFunction(dst_grid, projection_matrix(src.grid, dst_grid) @ src.values)


class Projection:
    """Precomputed projection from one grid to another, applied to ``(M_src, n)`` arrays."""

    def __init__(self, src: TimeGrid, dst: TimeGrid):
        self.src = src
        self.dst = dst
        self.identity = src == dst
        self.matrix = projection_matrix(src, dst)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if self.identity:
            return values
        return self.matrix @ values

    def apply(self, f: TraceFunction) -> TraceFunction:
        if f.grid != self.src:
            raise TimeGridError("trace function is not on the projection's source grid")
        return TraceFunction(self.dst, np.array(self(f.values), copy=True))


def compose_project(grid_a: TimeGrid, grid_b: TimeGrid) -> tuple[Projection, Projection]:
    """Return the pair ``(Pi_ba, Pi_ab)``: ``a -> b`` and ``b -> a``."""
    return Projection(grid_a, grid_b), Projection(grid_b, grid_a)
