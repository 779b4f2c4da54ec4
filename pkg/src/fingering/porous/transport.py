"""
Concentration initial condition and transport step

The retarded convection-diffusion-reaction equation

.. math::

    (1 + k) \\partial_t c + \\nabla \\cdot (c u) = D \\Delta c - \\kappa c

is advanced by operator splitting: explicit conservative advection followed
by one implicit solve for diffusion and reaction. No-flux conditions hold on
the whole boundary.
"""
from __future__ import annotations

import logging
from typing import Literal

import attrs
import numpy as np
from attrs import field, frozen, validators

from fingering.exceptions import CFLViolationError
from fingering.porous.grid import (
    CellField,
    FaceField,
    NDArrayFloat,
    StructuredGrid,
    check_same_grid,
    divergence,
    reduce,
)
from fingering.porous.linalg import (
    FaceCoefficientOperator,
    JacobiPreconditioner,
    conjugate_gradient,
)
from fingering.porous.model import PhysicalParams

logger = logging.getLogger(__name__)

AdvectionScheme = Literal["upwind", "minmod"]
ReactionTreatment = Literal["exponential", "implicit_euler"]
InitialProfile = Literal["step", "cosine", "uniform", "smooth"]

QUIESCENT_EPSILON = 1e-30
"""Guards :func:`stable_dt` against division by zero"""

CFL_TOLERANCE = 1e-12

BOUNDS_SLACK = 1e-8
"""Absolute slack allowed on the maximum principle"""

ITERATION_CAP_FACTOR = 50

MASS_DEFECT_SAFETY = 10.0


def _non_negative(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if value < 0:
        raise ValueError(f"{attribute.name} must be >= 0, got {value!r}")  # noqa: TRY003


@frozen
class InitialCondition:
    """
    Initial concentration

    The default reproduces a heavy layer (``c_upper``) sitting on a light
    layer (``c_lower``) with a small random disturbance at the interface.
    """

    c_lower: float = field(default=1.0, converter=float, validator=_non_negative)
    """Concentration below the interface"""

    c_upper: float = field(default=2.0, converter=float, validator=_non_negative)
    """Concentration above the interface"""

    interface_y: float = field(default=100.0, converter=float)
    """Height of the interface"""

    perturbation_amplitude: float = field(
        default=1e-3, converter=float, validator=_non_negative
    )
    """Largest absolute value of the interface perturbation"""

    seed: int = field(default=0, validator=validators.instance_of(int))
    """Seed of the random number generator used for the perturbation"""

    profile: InitialProfile = field(
        default="step", validator=validators.in_(("step", "cosine", "uniform", "smooth"))
    )
    """
    Shape of the initial field

    ``step`` is the layered profile, ``cosine`` is the slowest decaying
    diffusion mode ``c_lower + (c_upper - c_lower) (1 + cos(pi y / Ly)) / 2``
    and ``uniform`` is ``c_lower`` everywhere. ``smooth`` is a layered
    profile with a tanh front of width ``interface_width`` around the
    displaced interface ``interface_y + amplitude cos(2 pi x / Lx)``. Unlike
    the random step it is the same field on every mesh.
    """

    interface_width: float = field(default=2.0, converter=float)
    """Half-width of the ``smooth`` front"""

    @interface_width.validator
    def _check_width(self, attribute: object, value: float) -> None:
        if not value > 0:
            raise ValueError(f"interface_width must be > 0, got {value!r}")  # noqa: TRY003

    @c_upper.validator
    def _check_ordering(self, attribute: object, value: float) -> None:
        if value < self.c_lower:
            raise ValueError(  # noqa: TRY003
                f"c_upper ({value!r}) must be >= c_lower ({self.c_lower!r})"
            )


@frozen
class StepReport:
    """
    Summary of one transport step
    """

    dt: float
    """Time step used"""

    cfl: float
    """Advective Courant number of the step"""

    iterations: int
    """Iterations of the implicit solve"""

    c_min: float
    """Smallest concentration after the step"""

    c_max: float
    """Largest concentration after the step"""

    mass: float
    """Total concentration after the step"""

    mass_factor: float = 1.0
    """Ratio of the total concentration after the step to the one before"""

    mass_shift: float = 0.0
    """Uniform correction added to close the discrete mass balance"""

    transport_residual: float = 0.0
    """Final relative residual of the implicit solve"""

    mass_defect: float = 0.0
    """Mismatch of the total concentration before the uniform correction"""

    mass_defect_limit: float = float("inf")
    """
    Largest mismatch the implicit solve tolerance allows, see
    :func:`mass_defect_limit`
    """


def initial_condition(grid: StructuredGrid, ic: InitialCondition) -> CellField:
    """
    Build the initial concentration field

    For the ``step`` profile the cell row just below the interface is raised
    and the row just above it lowered by the same random amount per column,
    drawn uniformly from ``[-amplitude, amplitude]`` in absolute value. The
    perturbation therefore keeps the field within ``[c_lower, c_upper]`` and
    leaves the total concentration unchanged.

    Parameters
    ----------
    grid
        Grid
    ic
        Initial condition

    Raises
    ------
    ValueError
        The interface lies outside ``(0, Ly)``

    Returns
    -------
        Initial concentration
    """
    if ic.profile == "uniform":
        return CellField.full(grid, ic.c_lower)

    y = grid.y_centers
    if ic.profile == "cosine":
        column = ic.c_lower + (ic.c_upper - ic.c_lower) * 0.5 * (
            1.0 + np.cos(np.pi * y / grid.Ly)
        )
        return CellField(np.tile(column, (grid.nx, 1)), grid)

    if not 0 < ic.interface_y < grid.Ly:
        raise ValueError(  # noqa: TRY003
            f"interface_y must lie in (0, {grid.Ly!r}), got {ic.interface_y!r}"
        )

    if ic.profile == "smooth":
        front = ic.interface_y + ic.perturbation_amplitude * np.cos(
            2.0 * np.pi * grid.x_centers / grid.Lx
        )
        z = (y[np.newaxis, :] - front[:, np.newaxis]) / ic.interface_width
        values = ic.c_lower + (ic.c_upper - ic.c_lower) * 0.5 * (1.0 + np.tanh(z))
        return CellField(values, grid)

    upper = y >= ic.interface_y
    values = np.where(upper, ic.c_upper, ic.c_lower)[np.newaxis, :].repeat(grid.nx, axis=0)

    first_upper = int(np.argmax(upper)) if upper.any() else grid.ny
    if ic.perturbation_amplitude > 0 and 0 < first_upper < grid.ny:
        rng = np.random.default_rng(ic.seed)
        noise = rng.uniform(-ic.perturbation_amplitude, ic.perturbation_amplitude, grid.nx)
        shift = np.minimum(np.abs(noise), ic.c_upper - ic.c_lower)
        values[:, first_upper - 1] += shift
        values[:, first_upper] -= shift

    return CellField(np.clip(values, ic.c_lower, ic.c_upper), grid)


def advective_cfl(u: FaceField, dt: float, params: PhysicalParams) -> float:
    """
    Advective Courant number ``dt / (1 + k) (max|u_x| / dx + max|u_y| / dy)``
    """
    grid = u.grid
    speed = np.max(np.abs(u.xvals)) / grid.dx + np.max(np.abs(u.yvals)) / grid.dy

    return float(dt / params.retardation * speed)


def stable_dt(
    u: FaceField,
    params: PhysicalParams,
    grid: StructuredGrid,
    safety: float,
    dt_max: float = np.inf,
) -> float:
    """
    Largest advectively stable time step

    Parameters
    ----------
    u
        Face velocity
    params
        Model coefficients
    grid
        Grid
    safety
        Safety factor in ``(0, 1]``
    dt_max
        Upper limit, reached in a quiescent state

    Raises
    ------
    ValueError
        ``safety`` outside ``(0, 1]``

    Returns
    -------
        ``safety (1 + k) / (max|u_x| / dx + max|u_y| / dy + eps)`` capped at ``dt_max``
    """
    if not 0 < safety <= 1:
        raise ValueError(f"safety must be in (0, 1], got {safety!r}")  # noqa: TRY003

    speed = np.max(np.abs(u.xvals)) / grid.dx + np.max(np.abs(u.yvals)) / grid.dy
    dt = safety * params.retardation / (speed + QUIESCENT_EPSILON)

    return float(min(dt, dt_max))


def _minmod(a: NDArrayFloat, b: NDArrayFloat) -> NDArrayFloat:
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _limited_slopes(v: NDArrayFloat, axis: int) -> NDArrayFloat:
    d = np.diff(v, axis=axis)
    slopes = np.zeros_like(v)
    inner = [slice(None), slice(None)]
    inner[axis] = slice(1, -1)
    left = [slice(None), slice(None)]
    left[axis] = slice(None, -1)
    right = [slice(None), slice(None)]
    right[axis] = slice(1, None)
    slopes[tuple(inner)] = _minmod(d[tuple(left)], d[tuple(right)])

    return slopes


def advective_flux(c: CellField, u: FaceField, scheme: AdvectionScheme = "upwind") -> FaceField:
    """
    Face fluxes ``c u`` with upwinded face concentrations

    Parameters
    ----------
    c
        Concentration
    u
        Face velocity with zero boundary-normal components
    scheme
        ``upwind`` uses the upwind cell value. ``minmod`` adds a limited
        linear reconstruction within the upwind cell.

    Returns
    -------
        Advective fluxes, zero on the boundary
    """
    grid = check_same_grid(c, u)
    v = c.values

    left_x, right_x = v[:-1, :], v[1:, :]
    left_y, right_y = v[:, :-1], v[:, 1:]

    if scheme == "minmod":
        sx = _limited_slopes(v, axis=0)
        sy = _limited_slopes(v, axis=1)
        left_x = left_x + 0.5 * sx[:-1, :]
        right_x = right_x - 0.5 * sx[1:, :]
        left_y = left_y + 0.5 * sy[:, :-1]
        right_y = right_y - 0.5 * sy[:, 1:]
    elif scheme != "upwind":
        raise ValueError(f"Unknown advection scheme: {scheme!r}")  # noqa: TRY003

    ux = u.xvals[1:-1, :]
    uy = u.yvals[:, 1:-1]

    flux = FaceField.zeros(grid)
    flux.xvals[1:-1, :] = np.where(ux > 0, ux * left_x, ux * right_x)
    flux.yvals[:, 1:-1] = np.where(uy > 0, uy * left_y, uy * right_y)

    return flux


def implicit_coefficient(dt: float, params: PhysicalParams, reaction: ReactionTreatment) -> float:
    """
    Diagonal coefficient of the implicit diffusion-reaction solve

    ``exponential`` makes the total concentration decay by exactly
    ``exp(-kappa dt / (1 + k))`` per step. ``implicit_euler`` is the
    backward Euler coefficient ``(1 + k) / dt + kappa``.
    """
    retardation = params.retardation
    if reaction == "exponential":
        return float(retardation / dt * np.exp(params.kappa * dt / retardation))
    if reaction == "implicit_euler":
        return retardation / dt + params.kappa

    raise ValueError(f"Unknown reaction treatment: {reaction!r}")  # noqa: TRY003


def mass_defect_limit(
    rhs: NDArrayFloat, c_star: NDArrayFloat, a: float, tol: float, grid: StructuredGrid
) -> float:
    """
    Largest total-concentration mismatch left by a converged implicit solve

    The diffusion operator sums to zero over the cells, so the mismatch is
    ``cell_volume * |sum(r)| / a`` for the final residual ``r``. With
    ``||r|| <= tol ||rhs||`` this is at most
    ``cell_volume * sqrt(n) * tol * ||rhs|| / a``, plus the rounding error of
    summing ``n`` cells.

    Parameters
    ----------
    rhs
        Right-hand side of the implicit solve
    c_star
        Concentration after the advective update
    a
        Diagonal coefficient of the implicit solve
    tol
        Relative residual target of the implicit solve
    grid
        Grid

    Returns
    -------
        Limit including :data:`MASS_DEFECT_SAFETY`
    """
    n = rhs.size
    solve = grid.cell_volume * np.sqrt(n) * tol * float(np.linalg.norm(rhs)) / a
    summation = n * np.finfo(np.float64).eps * grid.cell_volume * float(np.sum(np.abs(c_star)))

    return float(MASS_DEFECT_SAFETY * (solve + summation))


def advance(  # noqa: PLR0913
    c: CellField,
    u: FaceField,
    dt: float,
    params: PhysicalParams,
    tol: float,
    *,
    advection: AdvectionScheme = "upwind",
    reaction: ReactionTreatment = "exponential",
) -> tuple[CellField, StepReport]:
    """
    Advance the concentration by one time step

    Parameters
    ----------
    c
        Concentration at the start of the step
    u
        Discretely divergence-free face velocity
    dt
        Time step
    params
        Model coefficients
    tol
        Relative residual target of the implicit solve
    advection
        Advective face reconstruction
    reaction
        Treatment of the reaction term in the implicit solve

    Raises
    ------
    CFLViolationError
        The advective Courant number exceeds one
    SolverConvergenceError
        The implicit solve did not converge

    Returns
    -------
        Concentration at the end of the step and a step summary
    """
    grid = check_same_grid(c, u)
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")  # noqa: TRY003

    cfl = advective_cfl(u, dt, params)
    if cfl > 1 + CFL_TOLERANCE:
        raise CFLViolationError(cfl, dt)

    retardation = params.retardation
    mass_before = reduce(c, "integral")

    flux = advective_flux(c, u, advection)
    c_star = c.values - dt / retardation * divergence(flux).values

    a = implicit_coefficient(dt, params, reaction)
    operator = FaceCoefficientOperator(
        grid,
        np.full((grid.nx + 1, grid.ny), params.D),
        np.full((grid.nx, grid.ny + 1), params.D),
        shift=a,
    )
    rhs = retardation / dt * c_star

    result = conjugate_gradient(
        operator.apply,
        rhs,
        x0=c_star,
        preconditioner=JacobiPreconditioner.from_operator(operator),
        tol=tol,
        max_iterations=ITERATION_CAP_FACTOR * max(grid.nx, grid.ny),
        name="transport solve",
    )

    # Diffusion conserves mass, so the exact balance is a uniform correction
    mass_factor = retardation / (dt * a)
    target = mass_before * mass_factor
    defect = target - float(np.sum(result.x)) * grid.cell_volume
    shift = defect / grid.area
    values = result.x + shift

    c_next = CellField(values, grid)
    report = StepReport(
        dt=dt,
        cfl=cfl,
        iterations=result.iterations,
        c_min=float(values.min()),
        c_max=float(values.max()),
        mass=reduce(c_next, "integral"),
        mass_factor=mass_factor,
        mass_shift=shift,
        transport_residual=result.residual,
        mass_defect=abs(defect),
        mass_defect_limit=mass_defect_limit(rhs, c_star, a, tol, grid),
    )
    logger.debug(
        "Transport step dt=%.4g cfl=%.3f iterations=%d mass defect=%.3e (limit %.3e)",
        dt,
        cfl,
        report.iterations,
        report.mass_defect,
        report.mass_defect_limit,
    )

    return c_next, report


def bounds_envelope(factor: float, c0_min: float, c0_max: float) -> tuple[float, float]:
    """
    Range that the concentration must stay in

    The initial range shrinks with the total concentration. Without reaction
    ``factor`` is one and this is the maximum principle.

    Parameters
    ----------
    factor
        Ratio of the current to the initial total concentration implied by
        the reaction, the product of :attr:`StepReport.mass_factor` over all
        steps so far
    c0_min
        Smallest initial concentration
    c0_max
        Largest initial concentration

    Returns
    -------
        Lower and upper bound, including :data:`BOUNDS_SLACK`
    """
    return c0_min * factor - BOUNDS_SLACK, c0_max * factor + BOUNDS_SLACK
