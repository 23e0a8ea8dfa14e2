import numpy as np
import pytest

from fracdd.discretize import PhysicalData, cell_balance
from fracdd.geometry import BoundarySegment, DomainSpec, boundary_segments, build_meshes, lateral_strip_segments
from fracdd.monolithic import CoupledProblem, energy_diagnostic, solve_monolithic
from fracdd.timegrid import TimeGrid

from conftest import small_problem


def test_zero_data_zero_solution():
    prob = small_problem(random_data=False, endpoints=(0.0, 0.0), segments=[])
    sol = solve_monolithic(prob)
    for a in (sol.p1, sol.p2, sol.pg, sol.F1, sol.F2, sol.Q):
        assert not np.any(a)
    assert not np.any(energy_diagnostic(sol, prob))


def test_fracture_velocity_dominates():
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, 100, 100, 100))
    segs = lateral_strip_segments()
    prob = CoupledProblem(boundary_segments(m1, segs), boundary_segments(m2, segs), frac.with_endpoints(1.0, 0.0),
                          PhysicalData(Kf_delta=1.0, delta=1e-3), TimeGrid(0.5, 300))
    sol = solve_monolithic(prob)
    u_frac = np.abs(sol.Q).max() / prob.phys.delta
    u_matrix = max(np.abs(sol.F1 / m1.edge_length).max(), np.abs(sol.F2 / m2.edge_length).max())
    assert u_frac > 10 * u_matrix
    assert np.abs(sol.Q).max() > 10 * max(np.abs(sol.F1).max(), np.abs(sol.F2).max())


def test_mirror_symmetry():
    # strips at the same heights on both sides; p -> 1 - p maps the left value 0 onto the right value 1
    n, ny = 6, 5
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, n, n, ny))
    segs = lateral_strip_segments(height=0.4)
    prob = CoupledProblem(boundary_segments(m1, segs), boundary_segments(m2, segs), frac.with_endpoints(0.5, 0.5),
                          PhysicalData(), TimeGrid(0.5, 6), p1_0=np.full(n * ny, 0.5), p2_0=np.full(n * ny, 0.5),
                          pg_0=np.full(ny, 0.5))
    sol = solve_monolithic(prob)
    p1 = sol.p1.reshape(6, ny, n)
    p2 = sol.p2.reshape(6, ny, n)
    assert np.allclose(p1, 1.0 - p2[:, :, ::-1], rtol=0, atol=1e-12)
    assert np.allclose(sol.pg, 0.5, rtol=0, atol=1e-12)
    assert np.ptp(sol.p1) > 0.1


def dirichlet_everywhere():
    return [BoundarySegment(side, 0.0, L, "dirichlet", 0.0)
            for side, L in (("left", 1.0), ("right", 1.0), ("top", 1.0), ("bottom", 1.0))]


def test_energy_nonincrease_random_trials():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n, ny, M = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 8)
        m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, n, n, ny))
        segs = dirichlet_everywhere()
        phys = PhysicalData(*rng.uniform(0.1, 2.0, 6))
        prob = CoupledProblem(boundary_segments(m1, segs), boundary_segments(m2, segs), frac, phys,
                              TimeGrid(rng.uniform(0.01, 2.0), M), p1_0=rng.standard_normal(n * ny),
                              p2_0=rng.standard_normal(n * ny), pg_0=rng.standard_normal(ny))
        E = energy_diagnostic(solve_monolithic(prob, store_fluxes=False), prob)
        assert np.all(np.diff(E) <= 1e-14 * E[0])


def test_single_cell_antisymmetric_mode_decays_geometrically():
    # one cell per subdomain, anti-symmetric state leaves the fracture at rest:
    # (1/dt + T_boundary + T_iface) p = p_old/dt  with  T_boundary = T_iface = 2
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, 1, 1, 1))
    segs = [BoundarySegment("left", 0.0, 1.0, "dirichlet", 0.0), BoundarySegment("right", 0.0, 1.0, "dirichlet", 0.0)]
    dt, M, c = 0.1, 12, 0.8
    prob = CoupledProblem(boundary_segments(m1, segs), boundary_segments(m2, segs), frac, PhysicalData(),
                          TimeGrid(dt * M, M), p1_0=np.array([c]), p2_0=np.array([-c]))
    sol = solve_monolithic(prob)
    r = 1.0 / (1.0 + 4.0 * dt)
    assert np.allclose(sol.pg, 0.0, atol=1e-15)
    E = energy_diagnostic(sol, prob)
    assert np.allclose(E, 2 * c ** 2 * r ** (2 * np.arange(M + 1)), rtol=1e-13, atol=0)


def test_global_conservation_and_cell_balance():
    prob = small_problem(n=5, M=7, phys=PhysicalData(s1=0.5, s2=2.0, K1=1.5, K2=0.3, s_gamma=0.7))
    sol = solve_monolithic(prob)
    dt = prob.grid.dt
    ph = prob.phys
    m1, m2, frac = prob.m1, prob.m2, prob.frac
    storage = (ph.s1 * m1.cell_area * (sol.p1[-1] - prob.p1_0).sum()
               + ph.s2 * m2.cell_area * (sol.p2[-1] - prob.p2_0).sum()
               + ph.s_gamma * frac.hy * (sol.pg[-1] - prob.pg_0).sum())
    outflow = 0.0
    for m in range(prob.grid.M):
        for mesh, F in ((m1, sol.F1[m]), (m2, sol.F2[m])):
            outflow += dt * ((mesh.incidence() @ F).sum() - mesh.normal_sign * F[mesh.interface_edges].sum())
        outflow += dt * (sol.Q[m, -1] - sol.Q[m, 0])
    sources = prob.grid.T * (m1.cell_area * prob.q1.sum() + m2.cell_area * prob.q2.sum())
    scale = abs(storage) + abs(outflow) + abs(sources)
    assert abs(storage + outflow - sources) <= 1e-10 * scale
    old1, old2 = prob.p1_0, prob.p2_0
    for m in range(prob.grid.M):
        for mesh, s, p, old, F, q in ((m1, ph.s1, sol.p1[m], old1, sol.F1[m], prob.q1),
                                      (m2, ph.s2, sol.p2[m], old2, sol.F2[m], prob.q2)):
            res = cell_balance(mesh, s, dt, p, old, F, q)
            assert np.abs(res).max() <= 1e-12 * max(1.0, np.abs(F).max())
        old1, old2 = sol.p1[m], sol.p2[m]


def test_problem_validation():
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, 2, 2, 2))
    with pytest.raises(ValueError):
        CoupledProblem(m1, m2, frac, PhysicalData(), TimeGrid(1.0, 2), q1=np.zeros(3))
    _, _, other = build_meshes(DomainSpec(2.0, 1.0, 1.0, 2, 2, 3))
    with pytest.raises(ValueError):
        CoupledProblem(m1, m2, other, PhysicalData(), TimeGrid(1.0, 2))
