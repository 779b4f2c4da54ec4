"""
Variable-mobility pressure solve and Darcy velocity recovery

Taking the divergence of Darcy's law ``u = -m (grad p + rho g)`` with
``div u = 0`` gives a pure Neumann problem for the pressure. The discrete
problem is assembled on the MAC grid with harmonic face mobilities and
arithmetic face densities.

The buoyancy source is split into a hydrostatic part, which is integrated
exactly, and a remainder. The linear solve only sees the remainder, so a
uniform concentration produces zero velocity regardless of the solver
tolerance.
"""
from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from attrs import frozen

from fingering.exceptions import GridMismatchError
from fingering.porous.grid import (
    CellField,
    FaceField,
    StructuredGrid,
    check_same_grid,
    divergence,
    face_arithmetic_mean,
    face_harmonic_mean,
    face_inner,
    gradient_at_faces,
    reduce,
)
from fingering.porous.linalg import (
    FaceCoefficientOperator,
    JacobiPreconditioner,
    Preconditioner,
    conjugate_gradient,
)
from fingering.porous.model import PhysicalParams, density, mobility
from fingering.porous.multigrid import MultigridPreconditioner

logger = logging.getLogger(__name__)

PreconditionerKind = Literal["jacobi", "multigrid"]

ITERATION_CAP_FACTOR = 50
"""The pressure solve gives up after ``ITERATION_CAP_FACTOR * max(nx, ny)`` iterations"""


@frozen
class EllipticSolveReport:
    """
    Convergence information of one pressure solve
    """

    iterations: int
    """Number of CG iterations"""

    residual: float
    """Final relative residual (2-norm)"""

    compatibility_defect: float
    """
    Magnitude of the right-hand side mean removed before solving, relative to
    the largest right-hand side entry
    """

    residual_history: tuple[float, ...] = ()
    """Relative residual at every iteration"""

    rhs_inf_norm: float = 0.0
    """Max-norm of the (projected) right-hand side"""

    rhs_scale: float = 0.0
    """
    Right-hand side size of an order-one density contrast, see
    :func:`buoyancy_rhs_scale`. The residual is also accepted below
    ``tol * rhs_scale``.
    """


def mobility_faces(c: CellField, params: PhysicalParams) -> FaceField:
    """
    Harmonic face average of the mobility ``K / mu(c)``
    """
    return face_harmonic_mean(CellField(mobility(c.values, params), c.grid))


def density_faces(c: CellField, params: PhysicalParams) -> FaceField:
    """
    Arithmetic face average of the density ``1 + alpha c``
    """
    return face_arithmetic_mean(CellField(density(c.values, params), c.grid))


def hydrostatic_pressure(rho_faces: FaceField, params: PhysicalParams) -> CellField:
    """
    Pressure balancing gravity along a fixed integration path

    Integrates ``grad p = -rho g`` along x in the first row of cells, then
    along y in every column. The y-faces are balanced exactly, and so are the
    x-faces when the density is uniform.

    Parameters
    ----------
    rho_faces
        Face densities
    params
        Model coefficients, only the gravity vector is used

    Returns
    -------
        Hydrostatic reference pressure, zero in cell ``(0, 0)``
    """
    grid = rho_faces.grid
    gx, gy = params.g

    bottom = np.zeros(grid.nx)
    bottom[1:] = np.cumsum(-rho_faces.xvals[1:-1, 0] * gx * grid.dx)

    values = np.zeros(grid.shape)
    values[:, 0] = bottom
    values[:, 1:] = bottom[:, np.newaxis] + np.cumsum(
        -rho_faces.yvals[:, 1:-1] * gy * grid.dy, axis=1
    )

    return CellField(values, grid)


def _unbalanced_force(
    p_h: CellField, rho_faces: FaceField, params: PhysicalParams
) -> FaceField:
    gx, _ = params.g
    force = gradient_at_faces(p_h)
    force.xvals += rho_faces.xvals * gx
    # Balanced exactly by construction of the hydrostatic pressure
    force.yvals[:, :] = 0.0

    return force.zero_boundary()


def buoyancy_rhs_scale(m_faces: FaceField, rho_faces: FaceField, params: PhysicalParams) -> float:
    """
    Size of the pressure right-hand side for an order-one density contrast

    ``max(m) max(rho) |g| max(Lx, Ly) / min(dx, dy)**2``: the divergence of
    the mobility-weighted imbalance between two neighbouring columns whose
    hydrostatic pressures differ by ``rho |g|`` times the domain height.
    Used as the absolute floor of the pressure solve.
    """
    grid = m_faces.grid
    m_max = max(float(np.max(m_faces.xvals)), float(np.max(m_faces.yvals)))
    rho_max = max(float(np.max(np.abs(rho_faces.xvals))), float(np.max(np.abs(rho_faces.yvals))))
    g_norm = float(np.hypot(*params.g))
    h_min = min(grid.dx, grid.dy)

    return m_max * rho_max * g_norm * max(grid.Lx, grid.Ly) / h_min**2


def pressure_operator(m_faces: FaceField) -> FaceCoefficientOperator:
    """
    Operator ``p -> -div(m grad p)`` for given face mobilities
    """
    return FaceCoefficientOperator(m_faces.grid, m_faces.xvals, m_faces.yvals)


def operator_apply(p: CellField, m_faces: FaceField) -> CellField:
    """
    Apply the pressure operator ``-div(m grad p)``

    Parameters
    ----------
    p
        Pressure
    m_faces
        Face mobilities

    Raises
    ------
    GridMismatchError
        ``p`` and ``m_faces`` live on different grids

    Returns
    -------
        Operator applied to ``p``
    """
    grid = check_same_grid(p, m_faces)
    flux = gradient_at_faces(p)
    flux.xvals *= m_faces.xvals
    flux.yvals *= m_faces.yvals
    out = divergence(flux)
    out.values *= -1.0

    return CellField(out.values, grid)


def make_preconditioner(
    operator: FaceCoefficientOperator, kind: PreconditionerKind
) -> Preconditioner:
    """
    Build a preconditioner of the requested kind

    Raises
    ------
    ValueError
        Unknown preconditioner
    """
    if kind == "jacobi":
        return JacobiPreconditioner.from_operator(operator)
    if kind == "multigrid":
        return MultigridPreconditioner.from_operator(operator)

    raise ValueError(f"Unknown preconditioner: {kind!r}")  # noqa: TRY003


def solve_pressure(
    c: CellField,
    params: PhysicalParams,
    tol: float,
    *,
    p0: CellField | None = None,
    preconditioner: PreconditionerKind = "jacobi",
) -> tuple[CellField, EllipticSolveReport]:
    """
    Solve the pressure equation for a given concentration

    Parameters
    ----------
    c
        Concentration
    params
        Model coefficients
    tol
        Relative residual target, in ``(0, 1)``. Residuals below ``tol``
        times :func:`buoyancy_rhs_scale` are accepted too, so a right-hand
        side that is only rounding noise does not stall the solve.
    p0
        Previous pressure used as initial guess
    preconditioner
        Preconditioner for the conjugate gradient iteration

    Raises
    ------
    ValueError
        ``c`` contains non-finite values or ``tol`` is outside ``(0, 1)``
    SolverConvergenceError
        The iteration cap was reached

    Returns
    -------
        Pressure normalised to zero mean and the solve report
    """
    if not 0 < tol < 1:
        raise ValueError(f"tol must be in (0, 1), got {tol!r}")  # noqa: TRY003
    c.check_finite()
    grid = c.grid

    m_faces = mobility_faces(c, params)
    rho_faces = density_faces(c, params)
    p_h = hydrostatic_pressure(rho_faces, params)

    force = _unbalanced_force(p_h, rho_faces, params)
    flux = FaceField(m_faces.xvals * force.xvals, m_faces.yvals * force.yvals, grid)
    b = divergence(flux).values

    b_mean = float(b.mean())
    b = b - b_mean
    rhs_inf_norm = float(np.max(np.abs(b)))
    compatibility_defect = abs(b_mean) / rhs_inf_norm if rhs_inf_norm > 0 else abs(b_mean)

    x0 = None
    if p0 is not None:
        if p0.grid != grid:
            raise GridMismatchError(p0.grid, grid)
        x0 = p0.values - p_h.values

    rhs_scale = buoyancy_rhs_scale(m_faces, rho_faces, params)
    operator = pressure_operator(m_faces)
    result = conjugate_gradient(
        operator.apply,
        b,
        x0=x0,
        preconditioner=make_preconditioner(operator, preconditioner),
        tol=tol,
        atol=tol * rhs_scale,
        max_iterations=iteration_cap(grid),
        project_mean=True,
        name="pressure solve",
    )

    p = p_h.values + result.x
    p -= p.mean()

    report = EllipticSolveReport(
        iterations=result.iterations,
        residual=result.residual,
        compatibility_defect=compatibility_defect,
        residual_history=result.residual_history,
        rhs_inf_norm=rhs_inf_norm,
        rhs_scale=rhs_scale,
    )
    logger.debug(
        "Pressure solve: %d iterations, residual %.3e", report.iterations, report.residual
    )

    return CellField(p, grid), report


def recover_velocity(p: CellField, c: CellField, params: PhysicalParams) -> FaceField:
    """
    Darcy velocity on the faces

    Parameters
    ----------
    p
        Pressure from :func:`solve_pressure` for the same concentration
    c
        Concentration
    params
        Model coefficients

    Raises
    ------
    GridMismatchError
        ``p`` and ``c`` live on different grids

    Returns
    -------
        ``-m (grad p + rho g)`` with zero boundary-normal components
    """
    grid = check_same_grid(p, c)
    gx, gy = params.g

    m_faces = mobility_faces(c, params)
    rho_faces = density_faces(c, params)
    grad = gradient_at_faces(p)

    u = FaceField(
        -m_faces.xvals * (grad.xvals + rho_faces.xvals * gx),
        -m_faces.yvals * (grad.yvals + rho_faces.yvals * gy),
        grid,
    )

    return u.zero_boundary()


def velocity_upper_bound(c: CellField, params: PhysicalParams) -> float:
    """
    Upper bound on the L2 norm of the Darcy velocity

    The velocity is the mobility-weighted projection of ``-m rho g`` onto
    discretely divergence-free fields, so its face norm cannot exceed
    ``max(m) * ||rho g||`` over the interior faces.

    Parameters
    ----------
    c
        Concentration
    params
        Model coefficients

    Returns
    -------
        Bound on ``sqrt(face_inner(u, u))``
    """
    grid = c.grid
    gx, gy = params.g
    rho_faces = density_faces(c, params)
    buoyancy = FaceField(rho_faces.xvals * gx, rho_faces.yvals * gy, grid).zero_boundary()
    m_max = params.K * float(np.exp(-params.R * np.min(c.values)))

    return m_max * float(np.sqrt(face_inner(buoyancy, buoyancy)))


def divergence_defect(u: FaceField) -> float:
    """
    Max-norm of the discrete divergence of ``u``
    """
    return reduce(divergence(u), "Linf")


def iteration_cap(grid: StructuredGrid) -> int:
    """Iteration cap for pressure solves on ``grid``"""
    return ITERATION_CAP_FACTOR * max(grid.nx, grid.ny)
