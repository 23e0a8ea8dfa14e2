import numpy as np
import pytest

from fracdd.discretize import PhysicalData, assemble_subdomain, step_solve
from fracdd.geometry import BoundarySegment, DomainSpec, boundary_segments, build_meshes
from fracdd.subsolve import SubdomainOperator, dtn_apply, map_subdomains, ntd_apply, vtr_apply
from fracdd.timegrid import TimeGrid, TimeGridError, TraceFunction

from oracles import dense_mixed_step


def operators(n=4, ny=4, M=5, T=0.5, phys=None, alpha=2.0):
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, n, n, ny))
    frac = frac.with_endpoints(0, 0)
    phys = phys or PhysicalData()
    g = TimeGrid(T, M)
    ops = {}
    for mesh in (m1, m2):
        for closure in ("dirichlet", "neumann", "ventcell"):
            ops[mesh.index, closure] = SubdomainOperator(mesh, phys, g, closure, alpha=alpha, frac=frac)
    return ops, g


APPLY = {"dirichlet": dtn_apply, "neumann": ntd_apply, "ventcell": vtr_apply}


@pytest.mark.parametrize("closure", ["dirichlet", "neumann", "ventcell"])
def test_zero_input_zero_output(closure):
    ops, g = operators()
    out = APPLY[closure](ops[1, closure], TraceFunction(g, np.zeros((g.M, 4))))
    assert not np.any(out.values)


@pytest.mark.parametrize("closure", ["dirichlet", "neumann", "ventcell"])
def test_linearity_and_causality(closure):
    ops, g = operators()
    op = ops[2, closure]
    rng = np.random.default_rng(1)
    X, Y = rng.standard_normal((2, g.M, 4))
    a, b = 1.7, -0.3
    lhs = op.apply(a * X + b * Y)
    rhs = a * op.apply(X) + b * op.apply(Y)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * np.abs(rhs).max())
    Z = X.copy()
    Z[3] += 5.0
    base, pert = op.apply(X), op.apply(Z)
    assert np.array_equal(base[:3], pert[:3])
    assert not np.allclose(base[3:], pert[3:])


def test_ntd_inverts_dtn():
    ops, g = operators(phys=PhysicalData(s1=0.3, K1=2.5))
    lam = np.random.default_rng(4).standard_normal((g.M, 4))
    flux = dtn_apply(ops[1, "dirichlet"], TraceFunction(g, lam))
    # outflow density u.n is minus the inflow density taken by the Neumann problem
    back = ntd_apply(ops[1, "neumann"], TraceFunction(g, -flux.values))
    assert np.allclose(back.values, lam, rtol=0, atol=1e-10)


def test_one_cell_dirichlet_hand_value():
    m1, _, _ = build_meshes(DomainSpec(2.0, 1.0, 1.0, 1, 1, 1))
    op = SubdomainOperator(m1, PhysicalData(), TimeGrid(1.0, 1), "dirichlet")
    lam = 0.6
    # (1 + 2) p = 2 lam, outflow = 2 (p - lam)
    p = 2 * lam / 3
    out = op.apply(np.array([[lam]]))
    assert out[0, 0] == pytest.approx(2 * (p - lam), rel=1e-15)


def test_one_cell_neumann_hand_value():
    m1, _, _ = build_meshes(DomainSpec(2.0, 1.0, 1.0, 1, 1, 1))
    op = SubdomainOperator(m1, PhysicalData(s1=2.0), TimeGrid(0.5, 1), "neumann")
    phi = 0.9
    # (2/0.5) p = phi, trace = p + phi/2
    out = op.apply(np.array([[phi]]))
    assert out[0, 0] == pytest.approx(phi / 4 + phi / 2, rel=1e-15)


def test_steady_dirichlet_limit():
    m1, _, _ = build_meshes(DomainSpec(2.0, 1.0, 1.0, 5, 5, 5))
    m1 = boundary_segments(m1, [BoundarySegment("left", 0.0, 1.0, "dirichlet", 0.0)])
    phys = PhysicalData(s1=1e-9)
    op = SubdomainOperator(m1, phys, TimeGrid(100.0, 4), "dirichlet")
    c = 2.0
    out = op.sweep(np.full((4, 5), c), affine=True)[0]
    # steady problem: linear profile from 0 at x=0 to c at the interface x=1
    assert np.allclose(out[-1], -c * 1.0, rtol=1e-8)
    steady = assemble_subdomain(m1, PhysicalData(s1=1e-30, check=False), 1.0, "dirichlet")
    _, ref = step_solve(steady, np.zeros(25), data=np.full(5, c))
    assert np.allclose(out[-1], ref, rtol=1e-8)


def test_ventcell_mirror_symmetry():
    ops, g = operators()
    theta = np.random.default_rng(7).standard_normal((g.M, 4))
    o1 = vtr_apply(ops[1, "ventcell"], TraceFunction(g, theta))
    o2 = vtr_apply(ops[2, "ventcell"], TraceFunction(g, theta))
    assert np.allclose(o1.values, o2.values, rtol=0, atol=1e-14)


def test_ventcell_one_slab_dense_oracle():
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, 2, 2, 1))
    frac = frac.with_endpoints(0.0, 0.0)
    phys = PhysicalData()
    theta = np.array([[0.4]])
    for mesh in (m1, m2):
        op = SubdomainOperator(mesh, phys, TimeGrid(0.5, 1), "ventcell", alpha=1.5, frac=frac)
        out = vtr_apply(op, TraceFunction(op.grid, theta), alpha=1.5).values
        _, _, _, ref = dense_mixed_step(mesh, phys, 0.5, "ventcell", np.zeros(2), theta[0], alpha=1.5,
                                        frac=frac, pg_old=np.zeros(1), lumped=True)
        assert np.allclose(out[0], ref, rtol=0, atol=1e-14)


def test_errors():
    ops, g = operators()
    with pytest.raises(TimeGridError):
        ops[1, "dirichlet"].apply(np.zeros((g.M + 1, 4)))
    with pytest.raises(TimeGridError):
        dtn_apply(ops[1, "dirichlet"], TraceFunction(TimeGrid(0.5, 7), np.zeros((7, 4))))
    with pytest.raises(ValueError):
        dtn_apply(ops[1, "neumann"], TraceFunction(g, np.zeros((g.M, 4))))
    with pytest.raises(ValueError):
        vtr_apply(ops[1, "ventcell"], TraceFunction(g, np.zeros((g.M, 4))), alpha=3.0)


def test_map_subdomains_keeps_order():
    from concurrent.futures import ThreadPoolExecutor

    items = [(i, i + 1) for i in range(6)]
    with ThreadPoolExecutor(3) as ex:
        assert map_subdomains(lambda a, b: a * b, items, ex) == [a * b for a, b in items]
    assert map_subdomains(lambda a, b: a - b, items) == [-1] * 6
