import os

import numpy as np
import pytest

from fracdd.discretize import PhysicalData
from fracdd.geometry import DomainSpec, build_meshes
from fracdd.harness import ConfigError, config_from_string, load_config, run, solve_scenario, time_grid_study
from fracdd.harness import io
from fracdd.harness.cli import main
from fracdd.harness.run import build_problem, empirical_alpha_sweep, reference_solution
from fracdd.metrics import ErrorMonitor, compute_errors
from fracdd.monolithic import SpaceTimeSolution, solve_monolithic
from fracdd.timegrid import TimeGrid

SMALL = """
[domain]
nx1 = 5
nx2 = 5
ny = 5
[time]
M1 = 6
M2 = 6
M_gamma = 6
[method]
method = {method}
scenario = {scenario}
initial_guess = {guess}
tol = 1e-8
[output]
snapshot_times = T/6, T/2, T
"""


def small_cfg(method="gtp_nn", scenario="driven", guess="zero", **kw):
    return config_from_string(SMALL.format(method=method, scenario=scenario, guess=guess), kw)


def test_config_defaults_and_overrides():
    cfg = config_from_string("")
    assert (cfg.nx1, cfg.ny, cfg.M_gamma, cfg.T) == (100, 100, 300, 0.5)
    assert cfg.method == "gto_gmres" and cfg.alpha == "optimized"
    cfg = small_cfg(K1=2.0)
    assert cfg.K1 == 2.0 and cfg.times() == pytest.approx([0.5 / 6, 0.25, 0.5])


@pytest.mark.parametrize("text, field", [
    ("[method]\nmethod = multigrid", "method"),
    ("[time]\nM1 = 0", "M1"),
    ("[physics]\nK1 = -1", "K1"),
    ("[method]\nmethod = gtp_nn\nalpha = 2", "alpha"),
    ("[method]\nscenario = error_to_zero", "initial_guess"),
    ("[domain]\nsegments = left:0:0.2", "segments"),
    ("[domain]\nbogus = 1", "bogus"),
    ("[extras]\na = 1", "extras"),
    ("[time]\nM1 = many", "M1"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError, match=field):
        config_from_string(text)


def test_load_config_file(tmp_path):
    path = tmp_path / "case.ini"
    path.write_text(SMALL.format(method="gto_gmres", scenario="driven", guess="zero"))
    assert load_config(str(path)).nx1 == 5
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))


@pytest.mark.parametrize("method", ["monolithic", "gtp_none", "gtp_local", "gtp_nn", "gto_jacobi", "gto_gmres"])
def test_zero_data_gives_zero_errors_and_iterations(method):
    cfg = small_cfg(method, fracture_bottom=0.0, segments="left:0:0.2:dirichlet:0; right:0:0.2:dirichlet:0")
    res = solve_scenario(cfg)
    assert res.iterations == 0 and res.converged
    assert not np.any(res.solution.p1) and not np.any(res.solution.pg)
    if method != "monolithic":
        assert res.report.as_tuple() == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("method", ["gtp_nn", "gto_gmres"])
def test_driven_runs_match_monolithic(method):
    res = solve_scenario(small_cfg(method, tol=1e-10))
    assert res.converged
    assert res.report.err_p_matrix <= 1e-7 and res.report.err_p_fracture <= 1e-7


def test_error_to_zero_history_columns():
    res = solve_scenario(small_cfg("gto_gmres", "error_to_zero", "random", alpha="5.0"))
    assert res.converged and res.iterations >= 1
    first, last = res.history[0], res.history[-1]
    assert first["err_p_matrix_rel"] == 1.0
    assert last["err_p_matrix_rel"] <= 1e-8 or last["err_u_matrix_rel"] <= 1e-8
    assert last["err_p_matrix"] == pytest.approx(last["err_p_matrix_rel"] * first["err_p_matrix"])


def test_gmres_residual_history_monotone():
    for method in ("gtp_none", "gtp_local", "gtp_nn", "gto_gmres"):
        res = solve_scenario(small_cfg(method))
        r = [row["rel_residual"] for row in res.history if row["rel_residual"] is not None]
        assert len(r) == res.iterations + 1
        assert np.all(np.diff(r) <= 1e-14)


def read_all(directory):
    return {name: open(os.path.join(directory, name), "rb").read() for name in sorted(os.listdir(directory))
            if name != "summary.csv"}


def test_outputs_deterministic_and_snapshots(tmp_path):
    cfg = small_cfg("gto_gmres", "error_to_zero", "random", seed=7)
    run(cfg, str(tmp_path / "a"))
    run(cfg, str(tmp_path / "b"))
    a, b = read_all(tmp_path / "a"), read_all(tmp_path / "b")
    assert a == b
    for n in range(3):
        for stem in ("p1.txt", "p2.txt", "flux1.csv", "flux2.csv", "fracture.csv"):
            assert f"snapshot{n}_{stem}" in a
    assert {"history.csv", "history_normalized.csv", "history.dat"} <= set(a)
    header = a["history.csv"].decode().splitlines()[0]
    assert header.startswith("iter,rel_residual,err_p_matrix,err_u_matrix,err_p_fracture")
    values, meta = io.read_field(str(tmp_path / "a" / "snapshot1_p1.txt"))
    assert values.shape == (5, 5) and meta["t"] == pytest.approx(0.25)


def test_threads_give_identical_results():
    cfg = small_cfg("gtp_nn")
    a = solve_scenario(cfg, threads=1)
    b = solve_scenario(cfg, threads=2)
    assert np.array_equal(a.solution.pg, b.solution.pg)
    assert a.iterations == b.iterations


def test_reference_round_trip(tmp_path):
    cfg = small_cfg("monolithic")
    sol = reference_solution(cfg, 12)
    path = str(tmp_path / "ref.txt.gz")
    io.write_reference(path, sol)
    back = io.read_reference(path)
    assert back.grid1 == sol.grid1 and back.grid_gamma.M == 12
    for name in ("p1", "p2", "pg", "p1_0", "pg_0"):
        assert np.array_equal(getattr(back, name), getattr(sol, name))
    assert not back.has_fluxes


def test_compute_errors_closed_form():
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, 3, 3, 4))
    T, c = 0.8, 0.3
    g = TimeGrid(T, 5)
    zero = SpaceTimeSolution(g, g, g, np.zeros((5, 12)), np.zeros((5, 12)), np.zeros((5, 4)))
    shift = SpaceTimeSolution(g, g, g, np.full((5, 12), c), np.full((5, 12), c), np.full((5, 4), c))
    rep = compute_errors(shift, zero, (m1, m2), frac)
    assert rep.err_p_matrix == pytest.approx(c * np.sqrt(2 * T), rel=1e-14)
    assert rep.err_p_fracture == pytest.approx(c * np.sqrt(T), rel=1e-14)
    assert np.isnan(rep.err_u_matrix)
    assert compute_errors(zero, zero, (m1, m2), frac).err_p_matrix == 0.0


def test_compute_errors_nonconforming_quadrature_oracle():
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, 2, 2, 2))
    T = 1.0
    ga, gb = TimeGrid(T, 3), TimeGrid(T, 5)
    rng = np.random.default_rng(0)
    a = [rng.standard_normal((3, n)) for n in (4, 4, 2)]
    b = [rng.standard_normal((5, n)) for n in (4, 4, 2)]
    sa = SpaceTimeSolution(ga, ga, ga, *a)
    sb = SpaceTimeSolution(gb, gb, gb, *b)
    rep = compute_errors(sa, sb, (m1, m2), frac)
    # midpoint rule with 10^4 samples: exact here since the sample count is a multiple of 15
    n = 10_005
    t = (np.arange(n) + 0.5) / n * T
    ia, ib = (t * 3 / T).astype(int), (t * 5 / T).astype(int)
    ep = sum(np.sum((a[k][ia] - b[k][ib]) ** 2) for k in (0, 1)) * m1.cell_area * T / n
    ef = np.sum((a[2][ia] - b[2][ib]) ** 2) * frac.hy * T / n
    assert rep.err_p_matrix == pytest.approx(np.sqrt(ep), rel=1e-10)
    assert rep.err_p_fracture == pytest.approx(np.sqrt(ef), rel=1e-10)


def test_error_monitor_window_scan():
    # errors 1, 0.5, 0.25, ... evaluated every 4 iterations; the first hit is found inside the window
    seq = {k: 2.0 ** -k for k in range(40)}
    mon = ErrorMonitor(lambda k: (seq[int(k)], seq[int(k)], 0.0), tol=2.0 ** -9 * 1.01, stride=4)
    mon.start(0)
    hit = None
    for k in range(1, 40):
        if mon.observe(k, lambda j: j, k - 3):
            hit = mon.hit
            break
    assert hit == 9
    assert sorted(mon.errors) == [0, 4, 8, 9, 12]


def test_empirical_sweep_shape():
    cfg = small_cfg("gto_jacobi", "error_to_zero", "random")
    errs = empirical_alpha_sweep(cfg, [1.0, 10.0], n_iter=3)
    assert errs.shape == (2, 3) and np.all(errs > 0)


def test_time_grid_study_small(tmp_path):
    cfg = small_cfg("gto_gmres")
    grids = {1: (4, 4), 2: (4, 8), 3: (8, 8)}
    ref = reference_solution(cfg, 32)
    table = time_grid_study(cfg, reference=ref, grids=grids, out_dir=str(tmp_path))
    assert len(table) == 9 and all(r["converged"] for r in table)
    assert os.path.exists(tmp_path / "time_grid_study.csv")
    err = {(r["method"], r["grid"]): r for r in table}
    for m in ("gtp_local", "gtp_nn", "gto_gmres"):
        assert err[m, 3]["err_p_matrix"] < err[m, 1]["err_p_matrix"]


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "case.ini"
    cfg_path.write_text(SMALL.format(method="gto_gmres", scenario="driven", guess="zero"))
    out = str(tmp_path / "out")
    assert main(["solve", "--config", str(cfg_path), "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "summary.csv"))
    assert main(["solve", "--config", str(cfg_path), "--set", "method=nonsense"]) == 2
    assert main(["solve", "--config", str(cfg_path), "--out", out, "--set", "max_iters=1",
                 "--set", "tol=1e-14"]) == 3
    assert main(["optimize-alpha", "--config", str(cfg_path), "--out", out]) == 0
    assert main(["alpha-scan", "--config", str(cfg_path), "--out", out, "--points", "8"]) == 0
    assert main(["reference", "--config", str(cfg_path), "--out", out, "--steps", "12"]) == 0
    assert io.read_reference(os.path.join(out, "reference.txt.gz")).grid1.M == 12
    assert main(["show-config", "--config", str(cfg_path)]) == 0
    assert "[domain]" in capsys.readouterr().out


def test_build_problem_uses_config_data():
    cfg = small_cfg("gtp_nn", q1=0.5, p0=0.2, p0_gamma=0.1, fracture_bottom=2.0)
    prob = build_problem(cfg)
    assert np.all(prob.q1 == 0.5) and np.all(prob.q2 == 0.0)
    assert np.all(prob.p1_0 == 0.2) and np.all(prob.pg_0 == 0.1)
    assert prob.frac.bottom_value == 2.0
    assert prob.phys == PhysicalData()
    homog = build_problem(small_cfg("gtp_nn", "error_to_zero", "random", q1=0.5))
    assert not np.any(homog.q1) and homog.frac.bottom_value == 0.0
    sol = solve_monolithic(homog)
    assert not np.any(sol.p1)
