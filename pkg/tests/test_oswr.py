import numpy as np
import pytest

from fracdd.linalg import GmresOptions
from fracdd.monolithic import solve_monolithic
from fracdd.oswr import (JacobiOptions, OswrContext, interface_from_solution, oswr_apply, oswr_rhs,
                         solve_oswr_gmres, solve_oswr_jacobi)
from fracdd.timegrid import TimeGrid

from conftest import rel_l2, small_problem


def ctx_for(prob, alpha=3.0, grids=None):
    g = prob.grid
    g1, g2, gg = grids or (g, g, g)
    return OswrContext(prob, g1, g2, gg, alpha)


def test_fixed_point_residual():
    prob = small_problem(n=5, M=6)
    sol = solve_monolithic(prob)
    ctx = ctx_for(prob)
    x = interface_from_solution(ctx, sol)
    b = oswr_rhs(ctx)
    assert np.linalg.norm(oswr_apply(ctx, x) - b) <= 1e-10 * np.linalg.norm(b)


def test_swap_symmetry():
    prob = small_problem(n=4, M=5, random_data=False)
    ctx = ctx_for(prob)
    rng = np.random.default_rng(5)
    t1, t2 = rng.standard_normal((2,) + ctx.shape)
    a = ctx.split(ctx.exchange(ctx.stack(t1, t2), affine=False))
    b = ctx.split(ctx.exchange(ctx.stack(t2, t1), affine=False))
    assert np.allclose(a[0], b[1], rtol=0, atol=1e-14)
    assert np.allclose(a[1], b[0], rtol=0, atol=1e-14)


def test_zero_data_converges_immediately():
    prob = small_problem(random_data=False, endpoints=(0, 0), segments=[])
    ctx = ctx_for(prob)
    assert not np.any(oswr_rhs(ctx))
    assert solve_oswr_gmres(ctx).n_iter == 0
    assert solve_oswr_jacobi(ctx).n_iter == 0


@pytest.mark.parametrize("alpha", [0.5, 3.0, 40.0])
def test_solution_independent_of_alpha(alpha):
    prob = small_problem(n=5, M=6)
    ref = solve_monolithic(prob)
    res = solve_oswr_gmres(ctx_for(prob, alpha), GmresOptions(rel_tol=1e-12))
    assert res.converged
    for a, b in ((res.solution.p1, ref.p1), (res.solution.p2, ref.p2), (res.solution.pg, ref.pg),
                 (res.solution.F2, ref.F2)):
        assert rel_l2(a, b) <= 1e-7
    c1, c2 = res.solution.info["pg_copies"]
    assert np.allclose(c1, c2, rtol=0, atol=1e-8 * np.abs(ref.pg).max())


def test_gmres_no_slower_than_jacobi():
    prob = small_problem(n=6, M=8)
    ctx = ctx_for(prob, 4.0)
    jac = solve_oswr_jacobi(ctx, JacobiOptions(tol=1e-8, max_iters=200))
    gm = solve_oswr_gmres(ctx_for(prob, 4.0), GmresOptions(rel_tol=1e-8))
    assert jac.converged and gm.converged
    assert gm.n_iter <= jac.n_iter
    assert rel_l2(jac.solution.pg, gm.solution.pg) <= 1e-6


def test_jacobi_on_iterate_and_damping():
    prob = small_problem(n=4, M=4)
    seen = []
    res = solve_oswr_jacobi(ctx_for(prob), JacobiOptions(tol=1e-9, damping=0.8),
                            on_iterate=lambda k, x: seen.append(k))
    assert res.converged and seen == list(range(1, res.n_iter + 1))


def test_divergence_flag():
    # damping beyond 2 turns the contraction into an expanding iteration
    prob = small_problem(n=4, M=4)
    res = solve_oswr_jacobi(ctx_for(prob), JacobiOptions(tol=1e-12, damping=3.5, max_iters=60))
    assert res.extra["diverged"] and not res.converged


def test_nonconforming_gmres_converges():
    prob = small_problem(n=4, M=4)
    T = prob.grid.T
    ctx = ctx_for(prob, 3.0, grids=(TimeGrid(T, 4), TimeGrid(T, 6), TimeGrid(T, 12)))
    res = solve_oswr_gmres(ctx, GmresOptions(rel_tol=1e-10))
    assert res.converged
    b = oswr_rhs(ctx)
    assert np.linalg.norm(oswr_apply(ctx, res.x) - b) <= 1.01e-10 * np.linalg.norm(b)


def test_invalid_inputs():
    prob = small_problem(n=2, M=2)
    with pytest.raises(ValueError):
        ctx_for(prob, 0.0)
    with pytest.raises(ValueError):
        ctx_for(prob).split(np.zeros(3))
