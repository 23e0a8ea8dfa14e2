"""Cell-centred step systems for the subdomains, the fracture and the coupled model.

The lowest-order mixed method on rectangles with a trapezoidal (lumped)
velocity mass matrix eliminates the edge fluxes cell by cell; what remains is
the two-point flux scheme assembled here.  Time stepping is backward Euler,
one factorization per (system, dt).

Flux conventions:

* ``F[e]`` is the edge-integrated flux along the edge's reference normal.
* Interface quantities are reported per unit length of the fracture as
  ``u_i . n_i``, the outflow of subdomain ``i`` into the fracture.
* Fracture node fluxes ``Q[j]`` (``ny + 1`` nodes) point in ``+y`` and are
  integrated over the fracture width, i.e. ``Q = K_f * delta * (-dp/dy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps

from .geometry import DIRICHLET, INTERIOR, NEUMANN, FractureMesh, SubdomainMesh
from .linalg import Factorization, factorize

CLOSURES = ("dirichlet", "neumann", "ventcell")


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalData:
    s1: float = 1.0
    s2: float = 1.0
    K1: float = 1.0
    K2: float = 1.0
    s_gamma: float = 1.0
    Kf_delta: float = 1.0
    delta: float = 1e-3
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if not self.check:
            return
        for name in ("s1", "s2", "K1", "K2", "s_gamma", "Kf_delta", "delta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise AssemblyError(f"{name} must be strictly positive, got {value!r}")

    def storage(self, index: int) -> float:
        return self.s1 if index == 1 else self.s2

    def permeability(self, index: int) -> float:
        return self.K1 if index == 1 else self.K2

    @property
    def Kf(self) -> float:
        return self.Kf_delta / self.delta


@dataclass(eq=False)
class StepSystem:
    """Factorized backward-Euler matrix plus what is needed to build right-hand sides.

    ``storage`` multiplies the previous state in the right-hand side, and
    ``bc_rhs`` holds the exterior boundary and fracture endpoint contributions
    (the part dropped by homogeneous sweeps).
    """

    kind: str
    dt: float
    matrix: sps.csr_matrix
    factor: Optional[Factorization]
    storage: np.ndarray
    bc_rhs: np.ndarray
    n_cells: int
    ny: int
    hy: float
    alpha: Optional[float] = None
    mesh: Optional[SubdomainMesh] = None
    meshes: tuple = ()
    frac: Optional[FractureMesh] = None
    phys: Optional[PhysicalData] = None
    T_iface: Optional[np.ndarray] = None
    edge_trans: Optional[np.ndarray] = None

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]

    @property
    def iface_cells(self) -> np.ndarray:
        return self.mesh.interface_cells

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factor.solve(rhs)


def _edge_transmissibilities(mesh: SubdomainMesh, K: float) -> np.ndarray:
    """Two-point transmissibility per edge; half-cell value on boundary and interface edges."""
    nV = mesh.n_vertical
    trans = np.empty(mesh.n_edges)
    trans[:nV] = K * mesh.hy / mesh.hx
    trans[nV:] = K * mesh.hx / mesh.hy
    trans[mesh.edge_kind != INTERIOR] *= 2.0
    return trans


def _cell_operator(mesh: SubdomainMesh, trans: np.ndarray) -> tuple[sps.csr_matrix, np.ndarray]:
    """Diffusion matrix over cells (interior + Dirichlet edges) and its boundary right-hand side."""
    n = mesh.n_cells
    cm, cp = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    interior = mesh.edge_kind == INTERIOR
    a, b, t = cm[interior], cp[interior], trans[interior]
    rows = [a, b, a, b]
    cols = [a, b, b, a]
    vals = [t, t, -t, -t]

    rhs = np.zeros(n)
    dir_e = np.nonzero(mesh.edge_kind == DIRICHLET)[0]
    dcell = np.where(cm[dir_e] >= 0, cm[dir_e], cp[dir_e])
    rows.append(dcell)
    cols.append(dcell)
    vals.append(trans[dir_e])
    np.add.at(rhs, dcell, trans[dir_e] * mesh.edge_value[dir_e])

    neu_e = np.nonzero(mesh.edge_kind == NEUMANN)[0]
    ncell = np.where(cm[neu_e] >= 0, cm[neu_e], cp[neu_e])
    np.add.at(rhs, ncell, -mesh.edge_value[neu_e] * mesh.edge_length[neu_e])

    A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n))
    return A, rhs


def fracture_stiffness(frac: FractureMesh, Kf_delta: float, endpoint: str = "half_cell"
                       ) -> tuple[sps.csr_matrix, np.ndarray]:
    """1D two-point stiffness on the fracture segments and its endpoint right-hand side.

    ``endpoint="half_cell"`` places the Dirichlet value at the fracture tip
    (distance ``hy/2`` from the first segment centre); ``"full_cell"`` uses
    the ghost-cell distance ``hy``.
    """
    if endpoint not in ("half_cell", "full_cell"):
        raise AssemblyError(f"unknown endpoint closure {endpoint!r}")
    ny, hy = frac.ny, frac.hy
    t = Kf_delta / hy
    t_end = 2.0 * t if endpoint == "half_cell" else t
    diag = np.full(ny, 2.0 * t)
    diag[0] = t + t_end
    diag[-1] = t + t_end
    if ny == 1:
        diag[0] = 2.0 * t_end
    off = np.full(ny - 1, -t)
    S = sps.diags([off, diag, off], [-1, 0, 1], shape=(ny, ny), format="csr")
    rhs = np.zeros(ny)
    rhs[0] += t_end * frac.bottom_value
    rhs[-1] += t_end * frac.top_value
    return S, rhs


def endpoint_transmissibility(frac: FractureMesh, Kf_delta: float, endpoint: str = "half_cell") -> float:
    t = Kf_delta / frac.hy
    return 2.0 * t if endpoint == "half_cell" else t


def assemble_subdomain(mesh: SubdomainMesh, phys: PhysicalData, dt: float, closure: str,
                       alpha: Optional[float] = None, frac: Optional[FractureMesh] = None,
                       endpoint: str = "half_cell", factor: bool = True) -> StepSystem:
    """Backward-Euler system of one subdomain with the given interface closure.

    ``dirichlet``: interface edges carry a prescribed pressure ``lambda``.
    ``neumann``: interface edges carry a prescribed inflow density ``phi = -u.n``.
    ``ventcell``: ``ny`` extra unknowns hold the fracture pressure seen by this
    subdomain; their rows carry the fracture storage, the fracture stiffness
    and the Robin term ``alpha``, with data ``theta``.
    """
    if closure not in CLOSURES:
        raise AssemblyError(f"closure must be one of {CLOSURES}, got {closure!r}")
    if not dt > 0:
        raise AssemblyError(f"dt must be positive, got {dt!r}")
    idx = mesh.index
    K, s = phys.permeability(idx), phys.storage(idx)
    trans = _edge_transmissibilities(mesh, K)
    A, rhs = _cell_operator(mesh, trans)
    n = mesh.n_cells
    ny = mesh.ny
    cells = mesh.interface_cells
    T_e = trans[mesh.interface_edges]
    storage = np.full(n, s * mesh.cell_area / dt)
    A = A + sps.diags(storage)

    if closure == "dirichlet":
        A = A + sps.csr_matrix((T_e, (cells, cells)), shape=(n, n))
    elif closure == "ventcell":
        if alpha is None or not alpha > 0:
            raise AssemblyError(f"ventcell closure needs alpha > 0, got {alpha!r}")
        if frac is None:
            raise AssemblyError("ventcell closure needs the fracture mesh")
        S, ep_rhs = fracture_stiffness(frac, phys.Kf_delta, endpoint)
        g_store = phys.s_gamma * mesh.hy / dt
        Agg = S + sps.diags(T_e + (alpha * mesh.hy + g_store))
        C = sps.csr_matrix((-T_e, (cells, np.arange(ny))), shape=(n, ny))
        A = sps.bmat([[A + sps.csr_matrix((T_e, (cells, cells)), shape=(n, n)), C],
                      [C.T, Agg]], format="csr")
        storage = np.concatenate([storage, np.full(ny, g_store)])
        rhs = np.concatenate([rhs, ep_rhs])

    A = sps.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return StepSystem(
        kind=closure, dt=dt, matrix=A, factor=factorize(A, symmetric=True) if factor else None,
        storage=storage, bc_rhs=rhs, n_cells=n, ny=ny, hy=mesh.hy,
        alpha=alpha if closure == "ventcell" else None, mesh=mesh, frac=frac, phys=phys,
        T_iface=T_e, edge_trans=trans,
    )


def assemble_fracture_1d(frac: FractureMesh, phys: PhysicalData, dt: Optional[float] = None,
                         include_time_term: bool = True, endpoint: str = "half_cell",
                         factor: bool = True) -> StepSystem:
    """Tridiagonal fracture system; the time term adds ``s_gamma*hy/dt`` to the diagonal."""
    S, ep_rhs = fracture_stiffness(frac, phys.Kf_delta, endpoint)
    ny = frac.ny
    storage = np.zeros(ny)
    if include_time_term:
        if dt is None or not dt > 0:
            raise AssemblyError("the time term needs a positive dt")
        storage[:] = phys.s_gamma * frac.hy / dt
        S = S + sps.diags(storage)
    S = sps.csr_matrix(S)
    return StepSystem(
        kind="fracture", dt=dt if dt is not None else np.inf, matrix=S,
        factor=factorize(S, symmetric=True) if factor else None, storage=storage,
        bc_rhs=ep_rhs, n_cells=0, ny=ny, hy=frac.hy, frac=frac, phys=phys,
    )


def assemble_coupled(m1: SubdomainMesh, m2: SubdomainMesh, frac: FractureMesh, phys: PhysicalData,
                     dt: float, endpoint: str = "half_cell", factor: bool = True) -> StepSystem:
    """Single system for both subdomains and the fracture pressures ``[p1, p2, p_gamma]``.

    Interface fluxes are eliminated with the same half-cell relation as the
    ventcell closure, so fixed points of the decomposed iterations coincide
    with this system's solution.
    """
    if not dt > 0:
        raise AssemblyError(f"dt must be positive, got {dt!r}")
    ny = frac.ny
    blocks, rhs_parts, storage, Ts, Cs = [], [], [], [], []
    for mesh in (m1, m2):
        K, s = phys.permeability(mesh.index), phys.storage(mesh.index)
        trans = _edge_transmissibilities(mesh, K)
        A, rhs = _cell_operator(mesh, trans)
        n = mesh.n_cells
        cells = mesh.interface_cells
        T_e = trans[mesh.interface_edges]
        st = np.full(n, s * mesh.cell_area / dt)
        blocks.append(A + sps.diags(st) + sps.csr_matrix((T_e, (cells, cells)), shape=(n, n)))
        rhs_parts.append(rhs)
        storage.append(st)
        Ts.append(T_e)
        Cs.append(sps.csr_matrix((-T_e, (cells, np.arange(ny))), shape=(n, ny)))
    S, ep_rhs = fracture_stiffness(frac, phys.Kf_delta, endpoint)
    g_store = phys.s_gamma * frac.hy / dt
    Agg = S + sps.diags(Ts[0] + Ts[1] + g_store)
    A = sps.bmat([[blocks[0], None, Cs[0]],
                  [None, blocks[1], Cs[1]],
                  [Cs[0].T, Cs[1].T, Agg]], format="csr")
    A.sum_duplicates()
    A.sort_indices()
    return StepSystem(
        kind="monolithic", dt=dt, matrix=A, factor=factorize(A, symmetric=True) if factor else None,
        storage=np.concatenate(storage + [np.full(ny, g_store)]),
        bc_rhs=np.concatenate(rhs_parts + [ep_rhs]), n_cells=m1.n_cells + m2.n_cells, ny=ny,
        hy=frac.hy, meshes=(m1, m2), frac=frac, phys=phys, T_iface=np.concatenate(Ts),
    )


def step_rhs(sys: StepSystem, x_old: np.ndarray, q: Optional[np.ndarray] = None,
             data: Optional[np.ndarray] = None, affine: bool = True) -> np.ndarray:
    """Right-hand side of one backward-Euler step.

    ``q`` is a per-cell source (slab average) and ``data`` the per-segment
    interface data of the closure (``lambda``, ``phi`` or ``theta``).
    """
    rhs = sys.storage * x_old
    if affine:
        rhs = rhs + sys.bc_rhs
    if q is not None:
        if sys.kind == "monolithic":
            areas = np.concatenate([np.full(m.n_cells, m.cell_area) for m in sys.meshes])
            rhs[: sys.n_cells] += np.asarray(q) * areas
        elif sys.kind == "fracture":
            rhs += np.asarray(q) * sys.hy
        else:
            rhs[: sys.n_cells] += np.asarray(q) * sys.mesh.cell_area
    if data is not None:
        data = np.asarray(data, dtype=float)
        if data.shape != (sys.ny,):
            raise AssemblyError(f"interface data must have shape ({sys.ny},), got {data.shape}")
        if sys.kind == "dirichlet":
            rhs[sys.iface_cells] += sys.T_iface * data
        elif sys.kind == "neumann":
            rhs[sys.iface_cells] += data * sys.hy
        elif sys.kind == "ventcell":
            rhs[sys.n_cells:] += data * sys.hy
        else:
            raise AssemblyError(f"{sys.kind} system takes no interface data")
    return rhs


def interface_output(sys: StepSystem, x: np.ndarray, data: Optional[np.ndarray]) -> np.ndarray:
    """Per-segment output of a closure given the new state and the slab's data.

    dirichlet: outflow density ``u.n``; neumann: pressure trace;
    ventcell: Robin value ``u.n + alpha * p_gamma``.
    """
    pc = x[sys.iface_cells]
    zero = np.zeros(sys.ny)
    d = zero if data is None else data
    if sys.kind == "dirichlet":
        return sys.T_iface * (pc - d) / sys.hy
    if sys.kind == "neumann":
        return pc + d * sys.hy / sys.T_iface
    if sys.kind == "ventcell":
        pg = x[sys.n_cells:]
        return sys.T_iface * (pc - pg) / sys.hy + sys.alpha * pg
    raise AssemblyError(f"{sys.kind} system has no interface output")


def step_solve(sys: StepSystem, x_old: np.ndarray, q: Optional[np.ndarray] = None,
               data: Optional[np.ndarray] = None, affine: bool = True) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Advance one slab; returns the new state and the closure's interface output."""
    x_old = np.asarray(x_old, dtype=float)
    if x_old.shape != (sys.n_unknowns,):
        raise AssemblyError(f"state must have shape ({sys.n_unknowns},), got {x_old.shape}")
    x = sys.solve(step_rhs(sys, x_old, q, data, affine))
    if sys.kind in CLOSURES:
        return x, interface_output(sys, x, data)
    return x, None


@dataclass
class SubdomainState:
    """Current state of one subdomain sweep and the slab states produced so far."""

    x: np.ndarray
    history: list = field(default_factory=list)

    def advance(self, sys: StepSystem, q=None, data=None, affine=True) -> Optional[np.ndarray]:
        self.x, out = step_solve(sys, self.x, q, data, affine)
        self.history.append(self.x)
        return out


def _iface_outflow(sys: StepSystem, x: np.ndarray, data: Optional[np.ndarray], affine: bool) -> np.ndarray:
    """Edge-integrated outflow through the interface edges."""
    pc = x[sys.iface_cells]
    if sys.kind == "dirichlet":
        lam = np.zeros(sys.ny) if data is None else data
        return sys.T_iface * (pc - lam)
    if sys.kind == "neumann":
        phi = np.zeros(sys.ny) if data is None else data
        return -phi * sys.hy
    if sys.kind == "ventcell":
        return sys.T_iface * (pc - x[sys.n_cells:])
    raise AssemblyError(f"{sys.kind} system has no interface")


def edge_fluxes(mesh: SubdomainMesh, trans: np.ndarray, p: np.ndarray, iface_outflow: np.ndarray,
                affine: bool = True) -> np.ndarray:
    """Edge-integrated fluxes along the reference normals for cell pressures ``p``."""
    cm, cp = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    F = np.zeros(mesh.n_edges)
    kind = mesh.edge_kind
    interior = kind == INTERIOR
    F[interior] = trans[interior] * (p[cm[interior]] - p[cp[interior]])
    for code in (DIRICHLET, NEUMANN):
        e = np.nonzero(kind == code)[0]
        minus_side = cm[e] >= 0
        cell = np.where(minus_side, cm[e], cp[e])
        if code == DIRICHLET:
            g = mesh.edge_value[e] if affine else 0.0
            out = trans[e] * (p[cell] - g)
        else:
            out = (mesh.edge_value[e] if affine else 0.0) * mesh.edge_length[e]
        F[e] = np.where(minus_side, out, -out)
    F[mesh.interface_edges] = mesh.normal_sign * iface_outflow
    return F


def subdomain_fluxes(sys: StepSystem, x: np.ndarray, data: Optional[np.ndarray] = None,
                     affine: bool = True) -> np.ndarray:
    return edge_fluxes(sys.mesh, sys.edge_trans, x[: sys.n_cells],
                       _iface_outflow(sys, x, data, affine), affine)


def fracture_node_fluxes(frac: FractureMesh, Kf_delta: float, pg: np.ndarray, affine: bool = True,
                         endpoint: str = "half_cell") -> np.ndarray:
    """Fluxes at the ``ny + 1`` fracture nodes, positive towards ``+y``."""
    t = Kf_delta / frac.hy
    t_end = endpoint_transmissibility(frac, Kf_delta, endpoint)
    Q = np.empty(frac.ny + 1)
    Q[1:-1] = t * (pg[:-1] - pg[1:])
    gb = frac.bottom_value if affine else 0.0
    gt = frac.top_value if affine else 0.0
    Q[0] = t_end * (gb - pg[0])
    Q[-1] = t_end * (pg[-1] - gt)
    return Q


def coupled_fluxes(sys: StepSystem, x: np.ndarray, affine: bool = True,
                   endpoint: str = "half_cell") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edge fluxes of both subdomains and the fracture node fluxes of a coupled state."""
    m1, m2 = sys.meshes
    n1 = m1.n_cells
    p1, p2, pg = x[:n1], x[n1: sys.n_cells], x[sys.n_cells:]
    out = []
    for mesh, p, T in ((m1, p1, sys.T_iface[: sys.ny]), (m2, p2, sys.T_iface[sys.ny:])):
        trans = _edge_transmissibilities(mesh, sys.phys.permeability(mesh.index))
        out.append(edge_fluxes(mesh, trans, p, T * (p[mesh.interface_cells] - pg), affine))
    Q = fracture_node_fluxes(sys.frac, sys.phys.Kf_delta, pg, affine, endpoint)
    return out[0], out[1], Q


def cell_balance(mesh: SubdomainMesh, s: float, dt: float, p_new: np.ndarray, p_old: np.ndarray,
                 F: np.ndarray, q: Optional[np.ndarray] = None) -> np.ndarray:
    """Residual ``s|c|(p_new - p_old)/dt + div F - q|c|`` per cell."""
    res = s * mesh.cell_area * (p_new - p_old) / dt + mesh.incidence() @ F
    if q is not None:
        res -= np.asarray(q) * mesh.cell_area
    return res


def fracture_balance(frac: FractureMesh, s_gamma: float, dt: float, pg_new: np.ndarray,
                     pg_old: np.ndarray, Q: np.ndarray, outflow_sum: np.ndarray) -> np.ndarray:
    """Residual of the fracture balance per segment; ``outflow_sum`` is edge-integrated."""
    return s_gamma * frac.hy * (pg_new - pg_old) / dt + (Q[1:] - Q[:-1]) - outflow_sum
