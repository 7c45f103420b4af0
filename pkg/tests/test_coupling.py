import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lfpp import coupling, gff
from lfpp.coupling import CouplingMode, CouplingSample, SQRT_PI_2
from lfpp.errors import BoundaryProximityError, BudgetError, SolverError
from lfpp.lattice import RectRegion, HALF_SQUARE

from oracles import circle_quadrature, dense_hat_matrix, hat, normal_equations_projection


def _random_coarse(n, rng):
    c = np.zeros((n + 1, n + 1))
    c[1:n, 1:n] = rng.standard_normal((n - 1, n - 1))
    return c


def test_interpolation_matches_hat_formula():
    n, m = 4, 3
    P = coupling.projection_solver(n, m).P.toarray()
    assert np.abs(P - dense_hat_matrix(n, m)).max() < 1e-14


@pytest.mark.parametrize("n,m", [(4, 2), (5, 3), (8, 2)])
def test_stiffness_is_coarse_laplacian(n, m):
    # energy of an interpolated field is m-independent on this triangulation
    solver = coupling.projection_solver(n, m)
    assert abs(solver.stiffness - gff.dirichlet_laplacian(n)).max() < 1e-12


@pytest.mark.parametrize("n,m", [(4, 2), (6, 3), (12, 4)])
def test_projection_identity_on_interpolants(n, m):
    solver = coupling.projection_solver(n, m)
    c = _random_coarse(n, np.random.default_rng(n * m))
    assert np.abs(solver.project(solver.interpolate(c)) - c).max() < 1e-8


def test_projection_of_zero():
    solver = coupling.projection_solver(8, 2)
    assert not solver.project(np.zeros((17, 17))).any()


@pytest.mark.parametrize("n,m,vertex", [(4, 2, (3, 1)), (4, 2, (3, 4)), (8, 2, (5, 8)), (4, 3, (4, 5))])
def test_projection_single_fine_hat(n, m, vertex):
    fine = np.zeros((n * m + 1, n * m + 1))
    fine[vertex] = 1.0
    assert vertex[0] % m or vertex[1] % m
    expected = normal_equations_projection(fine, n, m)
    got = coupling.projection_solver(n, m).project(fine)
    assert np.abs(got - expected).max() < 1e-8


def test_projection_cg_matches_direct():
    fine = gff.sample_dgff(32, 4).values
    direct = coupling.ProjectionSolver(16, 2).project(fine)
    iterative = coupling.ProjectionSolver(16, 2, method="cg").project(fine)
    assert np.abs(direct - iterative).max() < 1e-8


def test_projection_solver_reports_failure():
    solver = coupling.ProjectionSolver(8, 2, method="cg", maxiter=1)
    with pytest.raises(SolverError):
        solver.project(gff.sample_dgff(16, 1).values)


@pytest.mark.parametrize("seed", range(100))
def test_projection_idempotent(seed):
    solver = coupling.projection_solver(8, 2)
    x = gff.sample_dgff(16, seed, stream=1).values
    p = solver.project(x)
    assert np.abs(solver.project(solver.interpolate(p)) - p).max() < 1e-8


@given(st.integers(0, 2**40))
def test_pythagoras(seed):
    solver = coupling.projection_solver(12, 3)
    eta = gff.sample_dgff(36, seed, stream=1).values
    proj = solver.interpolate(solver.project(eta))
    total, a, b = solver.energy(eta), solver.energy(proj), solver.energy(eta - proj)
    assert abs(total - (a + b)) <= 1e-6 * total


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("mode", list(CouplingMode))
def test_coupling_projects_to_coarse(seed, mode):
    s = coupling.build_coupling(16, 2, seed, mode)
    solver = coupling.projection_solver(16, 2)
    assert np.abs(solver.project(s.fine.values) - s.coarse.values).max() < 1e-8
    assert s.fine.n == 32 and s.fine.coarse_n == 16


def test_coupling_coarse_is_plain_dgff():
    s = coupling.build_coupling(16, 2, 42)
    assert np.array_equal(s.coarse.values, gff.sample_dgff(16, 42).values)


def test_coupling_deterministic():
    a = coupling.build_coupling(24, 3, 8)
    b = coupling.build_coupling(24, 3, 8)
    for attr in ("coarse", "fine", "circ"):
        assert getattr(a, attr).checksum() == getattr(b, attr).checksum()


def test_coupling_validation():
    with pytest.raises(ValueError):
        coupling.build_coupling(16, 1, 0)
    with pytest.raises(ValueError):
        coupling.build_coupling(8, 2, 0)
    with pytest.raises(BudgetError):
        coupling.build_coupling(2048, 4, 0)


def test_budget_env(monkeypatch):
    monkeypatch.setenv("LFPP_BUDGET_NM", "40")
    with pytest.raises(BudgetError):
        coupling.check_budget(16, 3)
    coupling.check_budget(16, 2)


@pytest.mark.parametrize("mode,rel", [(CouplingMode.EXACT_COARSE, None), (CouplingMode.DIRECT_PROJECTION, 0.10)])
def test_coarse_center_variance(mode, rel):
    n, m, N = 16, 2, 10_000
    c = gff.center(n)
    solver = coupling.projection_solver(n, m)
    x = np.array([coupling.coupled_fields(n, m, s, mode, solver)[0][c] for s in range(N)])
    target = gff.green_function(n, c, c)
    var = np.mean(x ** 2)
    if rel is None:
        assert abs(var - target) < 3 * target * math.sqrt(2 / N)
    else:
        assert abs(var - target) < rel * target


def test_circle_stencil_weights():
    for m in (2, 3, 4, 8):
        dx, dy, w = coupling.circle_stencil(m)
        assert w.sum() == pytest.approx(1.0, abs=1e-13)
        assert np.all(w >= 0)
        assert np.abs(dx).max() <= m and np.abs(dy).max() <= m


def test_circle_average_constant_and_linear():
    n, m = 16, 4
    N = n * m
    coarse = np.zeros((n + 1, n + 1))
    const = CouplingSample.from_fields(coarse, np.full((N + 1, N + 1), 2.5), m)
    assert coupling.circle_average(const, (5, 9)) == pytest.approx(SQRT_PI_2 * 2.5, abs=1e-12)
    xs = np.arange(N + 1)[:, None] / m * np.ones((1, N + 1))
    lin = CouplingSample.from_fields(coarse, xs, m)
    for v in [(1, 1), (7, 3), (15, 15)]:
        assert coupling.circle_average(lin, v) == pytest.approx(SQRT_PI_2 * v[0], abs=1e-12)


def test_circle_average_boundary_error():
    s = coupling.build_coupling(16, 2, 0)
    with pytest.raises(BoundaryProximityError):
        coupling.circle_average(s, (0, 5))
    with pytest.raises(BoundaryProximityError):
        coupling.circle_average(s, (16, 16))
    assert np.isnan(s.circ.values[0, 3]) and np.isfinite(s.circ.values[1, 1])


@pytest.mark.parametrize("seed,v", [(0, (16, 16)), (1, (5, 27)), (2, (1, 30))])
def test_circle_average_dense_quadrature(seed, v):
    n, m = 32, 4
    s = coupling.build_coupling(n, m, seed)
    ref = SQRT_PI_2 * circle_quadrature(s.fine.values, v[0] * m, v[1] * m, m)
    assert abs(coupling.circle_average(s, v) - ref) < 1e-3
    assert s.circ.values[v] == pytest.approx(coupling.circle_average(s, v), abs=1e-12)


def test_discrepancy_remainder_free():
    n, m = 16, 2
    rng = np.random.default_rng(3)
    coarse = _random_coarse(n, rng)
    fine = coupling.projection_solver(n, m).interpolate(coarse)
    s = CouplingSample.from_fields(coarse, fine, m)
    stat = coupling.discrepancy_stat(s)
    mask = coupling._region_mask_interior(HALF_SQUARE, n)
    ref = max(abs(SQRT_PI_2 * circle_quadrature(fine, x * m, y * m, m, 4000) - SQRT_PI_2 * coarse[x, y])
              for x, y in zip(*np.nonzero(mask))) / math.log(n)
    assert stat >= 0 and math.isfinite(stat)
    assert stat == pytest.approx(ref, abs=1e-4)
    assert stat > 0


def test_discrepancy_zero_fields():
    s = CouplingSample.from_fields(np.zeros((17, 17)), np.zeros((65, 65)), 4)
    assert coupling.discrepancy_stat(s) == 0.0
    fine = coupling.projection_solver(16, 4).interpolate(np.zeros((17, 17)))
    assert coupling.discrepancy_stat(CouplingSample.from_fields(np.zeros((17, 17)), fine, 4)) == 0.0


def test_discrepancy_region_must_avoid_boundary():
    s = coupling.build_coupling(16, 2, 0)
    with pytest.raises(BoundaryProximityError):
        coupling.discrepancy_stat(s, RectRegion.rectangle(0, 0, 1, 1))


def test_variance_profile_empty():
    assert coupling.circle_average_variance_profile([32, 64], 4, 0) == []


def test_variance_profile_matches_exact():
    n, m, N = 16, 2, 3000
    (row,) = coupling.circle_average_variance_profile([n], m, N, seed=5)
    exact = coupling.circle_average_variance_exact(n, m)
    for key in ("var_circle", "var_coarse", "var_difference"):
        se = exact[key] * math.sqrt(2 / (N - 1))
        assert abs(row[key] - exact[key]) < 4 * se
    assert row["resid_circle"] == pytest.approx(row["var_circle"] - math.log(n))


def test_exact_variance_modes_agree():
    # stiffness equals the coarse Laplacian, so both modes share one law
    a = coupling.circle_average_variance_exact(16, 2, mode=CouplingMode.EXACT_COARSE)
    b = coupling.circle_average_variance_exact(16, 2, mode=CouplingMode.DIRECT_PROJECTION)
    for key in a:
        assert a[key] == pytest.approx(b[key], rel=1e-9)


def test_exact_variance_growth():
    a = coupling.circle_average_variance_exact(32, 4)
    b = coupling.circle_average_variance_exact(64, 4)
    assert b["var_circle"] - a["var_circle"] == pytest.approx(math.log(2), abs=0.05)
    assert b["var_coarse"] - a["var_coarse"] == pytest.approx(math.log(2), abs=0.05)
    assert 0.5 < b["var_difference"] / a["var_difference"] < 2


def test_discrepancy_tail_monotone():
    n, m = 32, 4
    solver = coupling.projection_solver(n, m)
    stats = np.array([coupling.discrepancy_stat(coupling.build_coupling(n, m, gff.derive_seed(7, k), solver=solver))
                      * math.log(n) for k in range(40)])
    base = math.sqrt(math.log(n))
    survival = [np.mean(stats >= base + x) for x in np.linspace(0, 4, 17)]
    assert all(a >= b for a, b in zip(survival, survival[1:]))
    assert survival[-1] < survival[0]


def test_bundle_round_trip(tmp_path):
    s = coupling.build_coupling(16, 2, 11, CouplingMode.DIRECT_PROJECTION)
    paths = coupling.write_bundle(s, tmp_path / "b")
    meta = json.loads(paths["sidecar"].read_text())
    assert meta == {"n": 16, "m": 2, "seed": 11, "mode": "direct-projection", "solver_tolerance": 1e-8}
    back = coupling.read_bundle(tmp_path / "b")
    for attr in ("coarse", "fine", "circ"):
        assert getattr(back, attr).values.tobytes() == getattr(s, attr).values.tobytes()
    assert back.mode == s.mode and back.m == 2


def test_hat_oracle_partition_of_unity():
    # sanity of the test oracle itself
    for x, y in [(0.3, 0.2), (0.9, 0.7), (0.5, 0.5)]:
        total = sum(hat(x - a, y - b) for a in range(-1, 3) for b in range(-1, 3))
        assert total == pytest.approx(1.0)
