import numpy as np
import pytest

from fracdd.discretize import PhysicalData
from fracdd.geometry import (BoundarySegment, DomainSpec, boundary_segments, build_meshes,
                             lateral_strip_segments)
from fracdd.monolithic import CoupledProblem
from fracdd.timegrid import TimeGrid


def small_problem(n=6, ny=None, M=8, T=0.5, seed=0, random_data=True, phys=None, segments=None,
                  endpoints=(1.0, 0.0), endpoint="half_cell", grid=None):
    """Coupled problem on an n x ny (per subdomain) mesh with optional random sources and initial state."""
    ny = ny or n
    m1, m2, frac = build_meshes(DomainSpec(2.0, 1.0, 1.0, n, n, ny))
    segs = lateral_strip_segments(height=1.0) if segments is None else segments
    m1, m2 = boundary_segments(m1, segs), boundary_segments(m2, segs)
    frac = frac.with_endpoints(*endpoints)
    rng = np.random.default_rng(seed)
    kw = {}
    if random_data:
        # smooth fields: low-order polynomials of the cell centres
        c1, c2 = m1.cell_centers(), m2.cell_centers()
        a = rng.uniform(-1, 1, 4)
        kw = dict(q1=a[0] + a[1] * c1[:, 0] * c1[:, 1], q2=a[2] * np.sin(np.pi * c2[:, 1]),
                  p1_0=np.cos(c1[:, 0]) * a[3], p2_0=c2[:, 1] ** 2,
                  pg_0=0.5 * np.sin(np.pi * (frac.nodes[:-1] + 0.5 * frac.hy)))
    return CoupledProblem(m1, m2, frac, phys or PhysicalData(), grid or TimeGrid(T, M), endpoint=endpoint, **kw)


def rel_l2(a, b):
    a, b = np.asarray(a), np.asarray(b)
    den = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (den if den > 0 else 1.0)


@pytest.fixture
def problem():
    return small_problem()


ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail):
    """Print one PASS/FAIL line now and again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
