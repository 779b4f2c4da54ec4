import numpy as np
import numpy.testing as npt
import pytest

from fingering.exceptions import SolverConvergenceError
from fingering.porous.grid import CellField, StructuredGrid, laplacian
from fingering.porous.linalg import (
    FaceCoefficientOperator,
    JacobiPreconditioner,
    conjugate_gradient,
)


def _operator(grid, shift=0.0, seed=None):
    if seed is None:
        mx = np.ones((grid.nx + 1, grid.ny))
        my = np.ones((grid.nx, grid.ny + 1))
    else:
        rng = np.random.default_rng(seed)
        mx = rng.uniform(0.5, 5.0, (grid.nx + 1, grid.ny))
        my = rng.uniform(0.5, 5.0, (grid.nx, grid.ny + 1))

    return FaceCoefficientOperator(grid, mx, my, shift=shift)


def test_unit_coefficients_give_minus_laplacian():
    grid = StructuredGrid(Lx=1.0, Ly=2.0, nx=6, ny=5)
    rng = np.random.default_rng(0)
    x = rng.normal(size=grid.shape)

    npt.assert_allclose(
        _operator(grid).apply(x), -laplacian(CellField(x, grid)).values, atol=1e-12
    )


def test_operator_is_symmetric():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=5, ny=4)
    op = _operator(grid, shift=0.3, seed=3)
    rng = np.random.default_rng(1)
    x = rng.normal(size=grid.shape)
    y = rng.normal(size=grid.shape)

    npt.assert_allclose(np.sum(op.apply(x) * y), np.sum(x * op.apply(y)), rtol=1e-12)


def test_diagonal_matches_apply():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=4, ny=3)
    op = _operator(grid, shift=np.linspace(0.0, 1.0, 12).reshape(grid.shape), seed=5)

    diag = op.diagonal()
    for i in range(grid.nx):
        for j in range(grid.ny):
            unit = np.zeros(grid.shape)
            unit[i, j] = 1.0
            npt.assert_allclose(diag[i, j], op.apply(unit)[i, j])


@pytest.mark.parametrize("shift, singular", ((0.0, True), (1.0, False)))
def test_singular(shift, singular):
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=4, ny=4)

    assert _operator(grid, shift=shift).singular is singular


def test_jacobi_preconditioner():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=4, ny=4)
    op = _operator(grid, seed=2)

    prec = JacobiPreconditioner.from_operator(op)
    r = np.ones(grid.shape)

    npt.assert_allclose(prec.inverse_diagonal, 1.0 / op.diagonal())
    assert prec.project_mean
    npt.assert_allclose(np.mean(prec(r)), 0.0, atol=1e-14)


def test_cg_solves_shifted_system():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=12, ny=10)
    op = _operator(grid, shift=10.0, seed=7)
    rng = np.random.default_rng(2)
    x_true = rng.normal(size=grid.shape)

    res = conjugate_gradient(
        op.apply,
        op.apply(x_true),
        preconditioner=JacobiPreconditioner.from_operator(op),
        tol=1e-12,
    )

    npt.assert_allclose(res.x, x_true, rtol=1e-8, atol=1e-8)
    assert res.residual <= 1e-12
    assert res.residual_history[0] == 1.0
    assert len(res.residual_history) == res.iterations + 1
    npt.assert_allclose(res.final_residual, op.apply(x_true) - op.apply(res.x), atol=1e-10)


def test_cg_singular_system_keeps_zero_mean():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=10, ny=10)
    op = _operator(grid, seed=11)
    rng = np.random.default_rng(3)
    x_true = rng.normal(size=grid.shape)
    x_true -= x_true.mean()

    # A constant added to the right-hand side is not in the range of the operator
    b = op.apply(x_true) + 0.5

    res = conjugate_gradient(op.apply, b, tol=1e-11, project_mean=True)

    npt.assert_allclose(res.x.mean(), 0.0, atol=1e-12)
    npt.assert_allclose(res.x, x_true, atol=1e-7)


def test_cg_zero_rhs():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=4, ny=4)

    res = conjugate_gradient(_operator(grid, shift=1.0).apply, np.zeros(grid.shape))

    assert res.iterations == 0
    npt.assert_array_equal(res.x, 0.0)


def test_cg_exact_initial_guess():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=4, ny=4)
    op = _operator(grid, shift=1.0)
    x = np.arange(16.0).reshape(grid.shape)

    res = conjugate_gradient(op.apply, op.apply(x), x0=x, tol=1e-8)

    assert res.iterations == 0
    npt.assert_allclose(res.x, x)


def test_cg_iteration_cap():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=16, ny=16)
    op = _operator(grid, seed=4)
    rng = np.random.default_rng(4)
    b = rng.normal(size=grid.shape)

    with pytest.raises(SolverConvergenceError, match="did not converge in 2 iterations") as exc:
        conjugate_gradient(op.apply, b, tol=1e-12, max_iterations=2, project_mean=True)

    assert exc.value.iterations == 2
    assert len(exc.value.residual_history) == 3


def test_cg_rounding_noise_meets_absolute_floor():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=16, ny=16)
    op = _operator(grid, seed=5)
    rng = np.random.default_rng(5)
    noise = 1e-14 * rng.normal(size=grid.shape)

    with pytest.raises(SolverConvergenceError):
        conjugate_gradient(op.apply, noise, tol=1e-10, max_iterations=3, project_mean=True)

    res = conjugate_gradient(
        op.apply,
        noise,
        x0=rng.normal(size=grid.shape),
        tol=1e-10,
        atol=1e-10,
        max_iterations=3,
        project_mean=True,
    )

    assert res.iterations == 0
    npt.assert_array_equal(res.x, 0.0)


def test_cg_absolute_floor_stops_early():
    grid = StructuredGrid(Lx=1.0, Ly=1.0, nx=16, ny=16)
    op = _operator(grid, seed=6)
    b = np.random.default_rng(6).normal(size=grid.shape)
    atol = 1e-6 * np.max(np.abs(b))

    strict = conjugate_gradient(op.apply, b, tol=1e-12, max_iterations=2000, project_mean=True)
    floored = conjugate_gradient(
        op.apply, b, tol=1e-12, atol=atol, max_iterations=2000, project_mean=True
    )

    assert 0 < floored.iterations < strict.iterations
    assert np.max(np.abs(floored.final_residual)) <= atol
