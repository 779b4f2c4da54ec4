import math

import numpy as np
import numpy.testing as npt
import pytest

from fingering.exceptions import GridMismatchError
from fingering.porous.grid import CellField, StructuredGrid, face_inner, max_abs
from fingering.porous.linalg import conjugate_gradient
from fingering.porous.model import PhysicalParams
from fingering.porous.pressure_solver import (
    density_faces,
    divergence_defect,
    hydrostatic_pressure,
    make_preconditioner,
    mobility_faces,
    operator_apply,
    pressure_operator,
    recover_velocity,
    solve_pressure,
    velocity_upper_bound,
)
from fingering.porous.transport import InitialCondition, initial_condition


@pytest.fixture
def layered():
    grid = StructuredGrid(Lx=16.0, Ly=32.0, nx=16, ny=32)
    ic = InitialCondition(interface_y=16.0, perturbation_amplitude=0.1, seed=3)

    return initial_condition(grid, ic)


@pytest.mark.parametrize("alpha", (0.0, 1.0, 4.0))
@pytest.mark.parametrize("R", (0.0, 2.0))
def test_uniform_concentration_is_at_rest(alpha, R):
    grid = StructuredGrid(Lx=100.0, Ly=200.0, nx=24, ny=48)
    params = PhysicalParams(alpha=alpha, R=R)
    c = CellField.full(grid, 1.5)

    p, report = solve_pressure(c, params, 1e-10)
    u = recover_velocity(p, c, params)

    assert report.iterations == 0
    assert max_abs(u) <= 1e-10
    npt.assert_allclose(p.values.mean(), 0.0, atol=1e-9)


def test_tilted_gravity_at_rest():
    grid = StructuredGrid(Lx=10.0, Ly=10.0, nx=8, ny=8)
    params = PhysicalParams(g=(math.sqrt(0.5), -math.sqrt(0.5)), alpha=2.0)
    c = CellField.full(grid, 1.0)

    p, _ = solve_pressure(c, params, 1e-10)

    assert max_abs(recover_velocity(p, c, params)) <= 1e-10


def test_hydrostatic_pressure_balances_columns():
    grid = StructuredGrid(Lx=4.0, Ly=4.0, nx=4, ny=4)
    params = PhysicalParams(alpha=1.0)
    c = CellField(np.tile(np.array([1.0, 1.0, 2.0, 2.0]), (4, 1)), grid)
    rho = density_faces(c, params)

    p_h = hydrostatic_pressure(rho, params)

    # grad p = -rho g along y, with g = (0, -1)
    npt.assert_allclose(np.diff(p_h.values, axis=1) / grid.dy, rho.yvals[:, 1:-1])
    assert p_h.values[0, 0] == 0.0


@pytest.mark.parametrize("preconditioner", ("jacobi", "multigrid"))
def test_velocity_is_divergence_free(layered, preconditioner):
    params = PhysicalParams()
    tol = 1e-10

    p, report = solve_pressure(layered, params, tol, preconditioner=preconditioner)
    u = recover_velocity(p, layered, params)

    n_cells = layered.grid.nx * layered.grid.ny
    floor = report.rhs_scale * math.sqrt(n_cells) / report.rhs_inf_norm
    assert report.iterations > 0
    assert report.residual <= tol * max(1.0, floor)
    assert report.compatibility_defect <= 1e-10
    assert divergence_defect(u) <= 10 * tol * max(report.rhs_inf_norm, report.rhs_scale) + 1e-10
    npt.assert_allclose(p.values.mean(), 0.0, atol=1e-10)
    npt.assert_array_equal(u.xvals[[0, -1], :], 0.0)
    npt.assert_array_equal(u.yvals[:, [0, -1]], 0.0)


def test_preconditioners_agree(layered):
    params = PhysicalParams()

    p_j, _ = solve_pressure(layered, params, 1e-10, preconditioner="jacobi")
    p_mg, _ = solve_pressure(layered, params, 1e-10, preconditioner="multigrid")
    u_j = recover_velocity(p_j, layered, params)
    u_mg = recover_velocity(p_mg, layered, params)

    scale = max_abs(u_j)
    npt.assert_allclose(u_mg.xvals, u_j.xvals, atol=1e-5 * scale)
    npt.assert_allclose(u_mg.yvals, u_j.yvals, atol=1e-5 * scale)


def test_warm_start_saves_iterations(layered):
    params = PhysicalParams()

    p, cold = solve_pressure(layered, params, 1e-10)
    _, warm = solve_pressure(layered, params, 1e-10, p0=p)

    assert warm.iterations < cold.iterations


def test_velocity_bound(layered):
    params = PhysicalParams(alpha=2.0, R=0.5)

    p, _ = solve_pressure(layered, params, 1e-10)
    u = recover_velocity(p, layered, params)

    assert math.sqrt(face_inner(u, u)) <= velocity_upper_bound(layered, params)


def test_perturbed_layer_drives_flow(layered):
    params = PhysicalParams()

    p, _ = solve_pressure(layered, params, 1e-10)
    u = recover_velocity(p, layered, params)

    assert max_abs(u) > 0


def test_invalid_tolerance(layered):
    with pytest.raises(ValueError, match="tol"):
        solve_pressure(layered, PhysicalParams(), 1.0)


def test_non_finite_concentration(layered):
    layered.values[0, 0] = math.nan

    with pytest.raises(ValueError, match="non-finite"):
        solve_pressure(layered, PhysicalParams(), 1e-8)


def test_initial_guess_on_other_grid(layered):
    other = CellField.zeros(StructuredGrid(Lx=16.0, Ly=32.0, nx=8, ny=16))

    with pytest.raises(GridMismatchError):
        solve_pressure(layered, PhysicalParams(), 1e-8, p0=other)


def test_operator_apply_matches_matrix_free_operator(layered):
    params = PhysicalParams()
    m_faces = mobility_faces(layered, params)
    rng = np.random.default_rng(0)
    p = CellField(rng.normal(size=layered.grid.shape), layered.grid)

    npt.assert_allclose(
        operator_apply(p, m_faces).values,
        pressure_operator(m_faces).apply(p.values),
        atol=1e-12,
    )


def _manufactured_error(n):
    """
    L2 error of the variable-mobility solve for p = cos(pi x) cos(pi y)

    The mobility is exp(-x) (c = x, R = 1).
    """
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=n, ny=n)
    x = grid.x_centers[:, np.newaxis]
    y = grid.y_centers[np.newaxis, :]
    c = CellField(np.broadcast_to(x, grid.shape).copy(), grid)
    params = PhysicalParams(R=1.0, K=1.0)

    p_exact = np.cos(np.pi * x) * np.cos(np.pi * y)
    m = np.exp(-x)
    # -div(m grad p) for this choice of m and p
    rhs = m * (2 * np.pi**2 * p_exact - np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))

    operator = pressure_operator(mobility_faces(c, params))
    res = conjugate_gradient(
        operator.apply,
        rhs,
        preconditioner=make_preconditioner(operator, "multigrid"),
        tol=1e-9,
        max_iterations=2000,
        project_mean=True,
    )
    error = (res.x - res.x.mean()) - (p_exact - p_exact.mean())

    return float(np.sqrt(np.sum(error**2) * grid.cell_volume))


def test_manufactured_solution_second_order():
    errors = [_manufactured_error(n) for n in (32, 64, 128)]

    orders = [math.log2(coarse / fine) for coarse, fine in zip(errors[:-1], errors[1:])]

    assert all(order >= 1.9 for order in orders), orders


def test_unknown_preconditioner(layered):
    with pytest.raises(ValueError, match="Unknown preconditioner"):
        solve_pressure(layered, PhysicalParams(), 1e-8, preconditioner="ilu")  # type: ignore[arg-type]
