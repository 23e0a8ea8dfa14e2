"""Rectangular domain split by a vertical fracture line.

The domain ``(0, Lx) x (0, Ly)`` is cut at ``x = fracture_x`` into a left
subdomain (index 1) and a right subdomain (index 2).  Both are meshed with
uniform rectangles; the fracture is a chain of ``ny`` segments that coincide
with the interface edges of both meshes.

Indexing conventions (stable, used by test fixtures):

* cells are row-major: ``c = iy * nx + ix``;
* vertical edges come first, column-major: ``e = ix_edge * ny + iy``;
* horizontal edges follow, row-major: ``e = nV + iy_edge * nx + ix``.

Every edge carries a reference normal (``+x`` for vertical, ``+y`` for
horizontal).  ``edge_cells[e] = (c_minus, c_plus)`` lists the cell on the
negative and positive side of that normal, ``-1`` when absent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sps

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2
INTERFACE = 3

EDGE_KINDS = {"interior": INTERIOR, "dirichlet": DIRICHLET, "neumann": NEUMANN, "interface": INTERFACE}

_ALIGN_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    Lx: float = 2.0
    Ly: float = 1.0
    fracture_x: float = 1.0
    nx1: int = 100
    nx2: int = 100
    ny: int = 100

    def validate(self) -> None:
        for name in ("nx1", "nx2", "ny"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise GeometryError(f"{name} must be a positive integer, got {value!r}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise GeometryError("Lx and Ly must be positive")
        if not 0 < self.fracture_x < self.Lx:
            raise GeometryError(f"fracture_x={self.fracture_x} must lie strictly inside (0, Lx)")
        on_line = self.Lx * self.nx1 / (self.nx1 + self.nx2)
        if abs(on_line - self.fracture_x) > _ALIGN_TOL * self.Lx:
            raise GeometryError(
                f"fracture_x={self.fracture_x} is not on a mesh line "
                f"(expected Lx*nx1/(nx1+nx2) = {on_line})"
            )

    @property
    def hy(self) -> float:
        return self.Ly / self.ny


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class SubdomainMesh:
    """Uniform rectangular mesh of one subdomain with classified edges."""

    index: int
    x0: float
    nx: int
    ny: int
    hx: float
    hy: float
    y_nodes: np.ndarray
    interface_x: float
    edge_cells: np.ndarray
    edge_kind: np.ndarray
    edge_value: np.ndarray
    edge_length: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertical(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_edges(self) -> int:
        return self.n_vertical + self.nx * (self.ny + 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def interface_side(self) -> str:
        return "right" if self.index == 1 else "left"

    @property
    def exterior_sides(self) -> tuple[str, ...]:
        return ("left", "bottom", "top") if self.index == 1 else ("right", "bottom", "top")

    @property
    def normal_sign(self) -> int:
        """Sign of the outward normal n_i on the interface relative to +x."""
        return 1 if self.index == 1 else -1

    @property
    def interface_edges(self) -> np.ndarray:
        ixe = self.nx if self.index == 1 else 0
        return ixe * self.ny + np.arange(self.ny)

    @property
    def interface_cells(self) -> np.ndarray:
        ix = self.nx - 1 if self.index == 1 else 0
        return np.arange(self.ny) * self.nx + ix

    def vertical_edge(self, ix_edge: int, iy: int) -> int:
        return ix_edge * self.ny + iy

    def horizontal_edge(self, iy_edge: int, ix: int) -> int:
        return self.n_vertical + iy_edge * self.nx + ix

    def cell_centers(self) -> np.ndarray:
        ix = np.arange(self.n_cells) % self.nx
        iy = np.arange(self.n_cells) // self.nx
        return np.column_stack([self.x0 + (ix + 0.5) * self.hx, (iy + 0.5) * self.hy])

    def incidence(self) -> sps.csr_matrix:
        """Signed cell-edge incidence ``D[c, e] = sigma(c, e)``.

        ``D @ F`` is the net outflow of every cell for edge fluxes ``F``
        given along the reference normals.
        """
        rows, cols, vals = [], [], []
        for side, sign in ((0, 1.0), (1, -1.0)):
            cells = self.edge_cells[:, side]
            mask = cells >= 0
            rows.append(cells[mask])
            cols.append(np.nonzero(mask)[0])
            vals.append(np.full(mask.sum(), sign))
        return sps.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cells, self.n_edges),
        )

    def boundary_edges(self, side: str) -> np.ndarray:
        """Edge indices of one side of this mesh's rectangle, ordered along the side."""
        if side == "left":
            return self.vertical_edge(0, 0) + np.arange(self.ny)
        if side == "right":
            return self.vertical_edge(self.nx, 0) + np.arange(self.ny)
        if side == "bottom":
            return self.horizontal_edge(0, 0) + np.arange(self.nx)
        if side == "top":
            return self.horizontal_edge(self.ny, 0) + np.arange(self.nx)
        raise GeometryError(f"unknown side {side!r}")

    def edge_span(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Start and end coordinates (along the side) of each edge of ``side``."""
        if side in ("left", "right"):
            return self.y_nodes[:-1], self.y_nodes[1:]
        xs = self.x0 + self.hx * np.arange(self.nx + 1)
        return xs[:-1], xs[1:]


@dataclass(frozen=True, eq=False)
class FractureMesh:
    ny: int
    hy: float
    x: float
    nodes: np.ndarray
    bottom_value: float = 0.0
    top_value: float = 0.0

    @property
    def n_segments(self) -> int:
        return self.ny

    def with_endpoints(self, bottom: float, top: float) -> "FractureMesh":
        return replace(self, bottom_value=float(bottom), top_value=float(top))


def _build_subdomain(index: int, x0: float, nx: int, ny: int, hx: float, y_nodes: np.ndarray,
                     interface_x: float) -> SubdomainMesh:
    hy = float(y_nodes[1] - y_nodes[0])
    n_vert = (nx + 1) * ny
    n_edges = n_vert + nx * (ny + 1)
    edge_cells = np.full((n_edges, 2), -1, dtype=np.int64)
    edge_length = np.empty(n_edges)

    ixe, iy = np.divmod(np.arange(n_vert), ny)
    left = np.where(ixe > 0, iy * nx + ixe - 1, -1)
    right = np.where(ixe < nx, iy * nx + ixe, -1)
    edge_cells[:n_vert, 0] = left
    edge_cells[:n_vert, 1] = right
    edge_length[:n_vert] = hy

    iye, ix = np.divmod(np.arange(nx * (ny + 1)), nx)
    below = np.where(iye > 0, (iye - 1) * nx + ix, -1)
    above = np.where(iye < ny, iye * nx + ix, -1)
    edge_cells[n_vert:, 0] = below
    edge_cells[n_vert:, 1] = above
    edge_length[n_vert:] = hx

    kind = np.full(n_edges, NEUMANN, dtype=np.int8)
    kind[(edge_cells >= 0).all(axis=1)] = INTERIOR
    value = np.zeros(n_edges)
    mesh = SubdomainMesh(
        index=index, x0=x0, nx=nx, ny=ny, hx=hx, hy=hy, y_nodes=y_nodes,
        interface_x=interface_x, edge_cells=edge_cells, edge_kind=kind,
        edge_value=value, edge_length=edge_length,
    )
    kind[mesh.interface_edges] = INTERFACE
    _freeze(edge_cells, kind, value, edge_length)
    return mesh


def build_meshes(spec: DomainSpec) -> tuple[SubdomainMesh, SubdomainMesh, FractureMesh]:
    """Mesh both subdomains and the fracture; exterior edges default to no-flow."""
    spec.validate()
    ny = int(spec.ny)
    y_nodes = spec.Ly * np.arange(ny + 1) / ny
    y_nodes.setflags(write=False)
    hx1 = spec.fracture_x / spec.nx1
    hx2 = (spec.Lx - spec.fracture_x) / spec.nx2
    m1 = _build_subdomain(1, 0.0, int(spec.nx1), ny, hx1, y_nodes, spec.fracture_x)
    m2 = _build_subdomain(2, spec.fracture_x, int(spec.nx2), ny, hx2, y_nodes, spec.fracture_x)
    frac = FractureMesh(ny=ny, hy=float(y_nodes[1] - y_nodes[0]), x=spec.fracture_x, nodes=y_nodes)
    return m1, m2, frac


@dataclass(frozen=True)
class BoundarySegment:
    """Piece of the exterior boundary with a prescribed condition.

    ``lo``/``hi`` are y-coordinates for the left/right sides and
    x-coordinates for the bottom/top sides.  For ``kind="neumann"`` the value
    is the outward normal flux density ``u . n``.
    """

    side: str
    lo: float
    hi: float
    kind: str
    value: float = 0.0


def boundary_segments(mesh: SubdomainMesh, segments: Sequence[BoundarySegment]) -> SubdomainMesh:
    """Return a copy of ``mesh`` with exterior edges reclassified by ``segments``.

    Segments on sides that are not exterior to ``mesh`` are skipped, and
    bottom/top segments are clipped to the mesh's x-range, so the same list
    can be applied to both subdomains.  Unlisted exterior edges are reset to
    zero-flux Neumann.
    """
    kind = mesh.edge_kind.copy()
    value = mesh.edge_value.copy()
    exterior = np.nonzero((kind == DIRICHLET) | (kind == NEUMANN))[0]
    kind[exterior] = NEUMANN
    value[exterior] = 0.0
    owner = np.full(mesh.n_edges, -1)

    for n, seg in enumerate(segments):
        if seg.kind not in ("dirichlet", "neumann"):
            raise GeometryError(f"segment {n}: kind must be 'dirichlet' or 'neumann', got {seg.kind!r}")
        if seg.side not in ("left", "right", "bottom", "top"):
            raise GeometryError(f"segment {n}: unknown side {seg.side!r}")
        if seg.hi <= seg.lo:
            raise GeometryError(f"segment {n}: empty range [{seg.lo}, {seg.hi}]")
        if seg.side not in mesh.exterior_sides:
            continue
        start, end = mesh.edge_span(seg.side)
        lo, hi = seg.lo, seg.hi
        if seg.side in ("bottom", "top"):
            lo, hi = max(lo, start[0]), min(hi, end[-1])
            if hi <= lo:
                continue
        scale = max(abs(end[-1]), 1.0)
        i_lo = np.nonzero(np.abs(start - lo) <= _ALIGN_TOL * scale)[0]
        i_hi = np.nonzero(np.abs(end - hi) <= _ALIGN_TOL * scale)[0]
        if len(i_lo) == 0 or len(i_hi) == 0:
            raise GeometryError(
                f"segment {n} ({seg.side}, [{seg.lo}, {seg.hi}]) is not aligned with mesh nodes"
            )
        edges = mesh.boundary_edges(seg.side)[i_lo[0]: i_hi[0] + 1]
        code = EDGE_KINDS[seg.kind]
        for e in edges:
            if owner[e] >= 0 and (kind[e] != code or value[e] != seg.value):
                raise GeometryError(f"segment {n} contradicts segment {owner[e]} on edge {e}")
        kind[edges] = code
        value[edges] = seg.value
        owner[edges] = n

    _freeze(kind, value)
    return replace(mesh, edge_kind=kind, edge_value=value)


def lateral_strip_segments(height: float = 0.2, left_value: float = 0.0,
                           right_value: float = 1.0) -> list[BoundarySegment]:
    """Dirichlet strips on the lower part of both lateral sides; no-flow elsewhere."""
    return [
        BoundarySegment("left", 0.0, height, "dirichlet", left_value),
        BoundarySegment("right", 0.0, height, "dirichlet", right_value),
    ]
