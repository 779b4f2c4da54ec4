"""
Coupled simulation loop

Each step solves the pressure for the current concentration, recovers the
Darcy velocity and advances the concentration with the largest stable time
step. Diagnostics are sampled at a fixed cadence of simulated time and the
runtime invariants of the scheme are checked as the run goes. A failed
invariant aborts the run.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import TYPE_CHECKING, Literal, Protocol

import numpy as np
from attrs import define, field, frozen

from fingering.exceptions import (
    CFLViolationError,
    InvariantViolationError,
    SimulationError,
    SolverConvergenceError,
)
from fingering.porous.diagnostics import (
    MIXING_SLACK,
    EnergyBound,
    TimeSeries,
    energy_upper_bound,
    mixing_lower_bound,
    mixing_step_exponent,
    sample_diagnostics,
)
from fingering.porous.grid import CellField, FaceField, StructuredGrid, face_inner, reduce
from fingering.porous.model import PhysicalParams, mobility
from fingering.porous.pressure_solver import (
    EllipticSolveReport,
    divergence_defect,
    recover_velocity,
    solve_pressure,
    velocity_upper_bound,
)
from fingering.porous.transport import (
    StepReport,
    advance,
    bounds_envelope,
    initial_condition,
    stable_dt,
)

if TYPE_CHECKING:
    from fingering.config import RunConfig

logger = logging.getLogger(__name__)

MASS_RTOL = 1e-10
NON_NEGATIVE_SLACK = 1e-10
L2_SLACK = 1e-10
ENERGY_BOUND_RTOL = 1e-6
MIXING_BOUND_SLACK = 1e-6
INCOMPRESSIBILITY_SAFETY = 10.0
VELOCITY_BOUND_RTOL = 1e-9
ROUNDOFF_FACTOR = 100.0
TIME_SNAP_RTOL = 1e-12


@define
class SimState:
    """
    State of a running simulation

    ``u`` and ``p`` come from the most recent pressure solve. With
    ``pressure_resolve_interval > 1`` that solve may have used an earlier
    concentration than ``c``.
    """

    t: float
    """Current time"""

    c: CellField
    """Concentration"""

    u: FaceField
    """Darcy velocity"""

    p: CellField
    """Pressure, zero mean"""

    step_count: int = 0
    """Number of transport steps taken"""

    pressure_solves: int = 0
    pressure_iterations: int = 0
    transport_iterations: int = 0

    mass_factor: float = 1.0
    """
    Ratio of the current to the initial total concentration implied by the
    reaction, accumulated over all steps
    """


@define
class InvariantChecks:
    """
    Number of times each runtime invariant was evaluated
    """

    steps: int = 0
    bounds: int = 0
    mass: int = 0
    mass_defect: int = 0
    incompressibility: int = 0
    velocity_bound: int = 0
    l2_dissipation: int = 0
    mixing_monotone: int = 0
    energy_bound: int = 0
    mixing_bound: int = 0

    dimensional_mixing_bound_misses: int = 0
    """
    Samples where the continuum dimensional mixing bound exceeded the degree
    of mixing (not an error, the asserted bound uses the mesh)
    """

    linear_mixing_bound_misses: int = 0
    """Samples where the linear mixing bound exceeded the degree of mixing (not an error)"""


@frozen
class RunResult:
    """
    Outcome of :func:`run`
    """

    state: SimState
    """Final state"""

    series: TimeSeries
    """Sampled diagnostics"""

    sigma0_sq: float
    """Variance of the initial concentration"""

    energy_bound: EnergyBound
    """Kinetic energy bound for this initial condition"""

    checks: InvariantChecks = field(factory=InvariantChecks)


class SimulationSink(Protocol):
    """
    Receiver of simulation output
    """

    def on_sample(self, state: SimState, series: TimeSeries) -> None:
        """
        Handle a new sample, ``series`` already includes it
        """

    def on_finish(self, state: SimState, series: TimeSeries) -> None:
        """
        Handle the end of the run
        """


def sample_times(t_end: float, sample_interval: float) -> list[float]:
    """
    Times after ``t = 0`` at which diagnostics are sampled

    Multiples of ``sample_interval`` up to ``t_end``. ``t_end`` is always
    the last sample, even if it is not a multiple.
    """
    n_full = math.floor(t_end / sample_interval * (1 + TIME_SNAP_RTOL))
    times = [i * sample_interval for i in range(1, n_full + 1)]
    times = [t for t in times if t < t_end * (1 - TIME_SNAP_RTOL)]
    times.append(t_end)

    return times


@define
class _InvariantMonitor:
    params: PhysicalParams
    grid: StructuredGrid
    reaction_free: bool
    pressure_tol: float
    c0_min: float
    c0_max: float
    mass0: float
    energy_bound: EnergyBound
    check_l2: bool
    checks: InvariantChecks = field(factory=InvariantChecks)
    previous_chi: float | None = None
    mixing_exponent: float = 0.0

    def after_pressure_solve(self, state: SimState, report: EllipticSolveReport) -> None:
        defect = divergence_defect(state.u)
        m_max = float(np.max(mobility(state.c.values, self.params)))
        h_min = min(self.grid.dx, self.grid.dy)
        roundoff = (
            ROUNDOFF_FACTOR
            * np.finfo(np.float64).eps
            * reduce(state.p, "Linf")
            * m_max
            / h_min**2
        )
        reference = max(report.rhs_inf_norm, report.rhs_scale)
        allowed = INCOMPRESSIBILITY_SAFETY * self.pressure_tol * reference + 1e-12 + roundoff
        self.checks.incompressibility += 1
        if defect > allowed:
            raise InvariantViolationError(
                "discrete incompressibility",
                f"max |div u| = {defect:.3e} > {allowed:.3e}",
                state.step_count,
                state.t,
            )

        # The divergence left by the solve enters through <div u, p>
        speed = math.sqrt(face_inner(state.u, state.u))
        bound = velocity_upper_bound(state.c, self.params)
        slack = math.sqrt(m_max * defect * reduce(state.p, "L1"))
        self.checks.velocity_bound += 1
        if speed > bound * (1 + VELOCITY_BOUND_RTOL) + slack:
            raise InvariantViolationError(
                "velocity bound",
                f"||u|| = {speed:.6g} > {bound:.6g} (slack {slack:.3e})",
                state.step_count,
                state.t,
            )

    def after_step(self, state: SimState, c_before: CellField, report: StepReport) -> None:
        step, t = state.step_count, state.t
        c_min, c_max = report.c_min, report.c_max
        self.checks.steps += 1
        self.mixing_exponent += mixing_step_exponent(report.dt, self.params, self.grid)

        self.checks.mass_defect += 1
        if report.mass_defect > report.mass_defect_limit:
            raise InvariantViolationError(
                "mass balance before correction",
                f"defect {report.mass_defect:.3e} > {report.mass_defect_limit:.3e}",
                step,
                t,
            )

        lower, upper = bounds_envelope(state.mass_factor, self.c0_min, self.c0_max)
        self.checks.bounds += 1
        if c_min < lower or c_max > upper:
            raise InvariantViolationError(
                "bounds envelope",
                f"range [{c_min!r}, {c_max!r}] outside [{lower!r}, {upper!r}]",
                step,
                t,
            )
        if self.c0_min >= 0 and c_min < -NON_NEGATIVE_SLACK:
            raise InvariantViolationError("non-negativity", f"min c = {c_min!r}", step, t)

        expected = self.mass0 * state.mass_factor
        mass = reduce(state.c, "integral")
        self.checks.mass += 1
        if abs(mass - expected) > MASS_RTOL * abs(expected) + np.finfo(np.float64).tiny:
            raise InvariantViolationError(
                "mass law", f"total {mass!r} != expected {expected!r}", step, t
            )

        if self.check_l2:
            l2_before = reduce(c_before, "L2")
            l2_after = reduce(state.c, "L2")
            self.checks.l2_dissipation += 1
            if l2_after > l2_before + L2_SLACK * max(1.0, l2_before):
                raise InvariantViolationError(
                    "L2 dissipation", f"||c|| grew from {l2_before!r} to {l2_after!r}", step, t
                )

    def after_sample(self, state: SimState, row: dict[str, float | None]) -> None:
        if not self.reaction_free:
            return

        step, t = state.step_count, state.t
        energy = row["energy"] or 0.0
        chi = row["mixing"]

        if self.energy_bound.valid:
            self.checks.energy_bound += 1
            limit = self.energy_bound.value * (1 + ENERGY_BOUND_RTOL) + 1e-12
            if energy > limit:
                raise InvariantViolationError(
                    "energy bound", f"E = {energy!r} > {limit!r}", step, t
                )

        if chi is None:
            return

        self.checks.mixing_monotone += 1
        if self.previous_chi is not None and chi < self.previous_chi - MIXING_SLACK:
            raise InvariantViolationError(
                "mixing monotonicity", f"chi fell from {self.previous_chi!r} to {chi!r}", step, t
            )
        self.previous_chi = chi

        self.checks.mixing_bound += 1
        bound = -math.expm1(-self.mixing_exponent)
        if bound > chi + MIXING_BOUND_SLACK:
            raise InvariantViolationError(
                "mixing lower bound", f"bound {bound!r} > chi {chi!r}", step, t
            )

        self._report_continuum_bound("dimensional", chi, t)
        self._report_continuum_bound("linear", chi, t)

    def _report_continuum_bound(
        self, variant: Literal["dimensional", "linear"], chi: float, t: float
    ) -> None:
        bound = mixing_lower_bound(t, self.params, self.grid, variant)
        if bound <= chi + MIXING_BOUND_SLACK:
            return

        counter = f"{variant}_mixing_bound_misses"
        misses = getattr(self.checks, counter)
        if misses == 0:
            logger.warning(
                "Continuum %s mixing bound %.6g exceeds chi %.6g at t=%g (reported only)",
                variant,
                bound,
                chi,
                t,
            )
        setattr(self.checks, counter, misses + 1)


def _solve_flow(
    state: SimState, params: PhysicalParams, config: RunConfig, monitor: _InvariantMonitor
) -> None:
    p, report = solve_pressure(
        state.c,
        params,
        config.solver.pressure_tol,
        p0=state.p if state.pressure_solves > 0 else None,
        preconditioner=config.solver.preconditioner,
    )
    state.p = p
    state.u = recover_velocity(p, state.c, params)
    state.pressure_solves += 1
    state.pressure_iterations += report.iterations
    monitor.after_pressure_solve(state, report)


def run(config: RunConfig, sinks: Sequence[SimulationSink] = ()) -> RunResult:
    """
    Run a simulation from ``t = 0`` to ``config.time.t_end``

    Parameters
    ----------
    config
        Validated run configuration
    sinks
        Receivers of every sample and of the end of the run

    Raises
    ------
    ValueError
        The initial concentration is not finite or negative
    InvariantViolationError
        A runtime invariant failed
    SimulationError
        A linear solve failed or a transport step was refused, carries the
        step index

    Returns
    -------
        Final state, sampled diagnostics and invariant bookkeeping
    """
    grid = config.grid.to_grid()
    params = config.physics

    c0 = initial_condition(grid, config.initial_condition)
    c0.check_finite()
    c0_min = float(c0.values.min())
    c0_max = float(c0.values.max())
    if c0_min < 0:
        raise ValueError(f"Initial concentration is negative (min {c0_min!r})")  # noqa: TRY003

    sigma0_sq = reduce(c0, "variance")
    energy_bound = energy_upper_bound(params, c0)
    monitor = _InvariantMonitor(
        params=params,
        grid=grid,
        reaction_free=params.kappa == 0,
        pressure_tol=config.solver.pressure_tol,
        c0_min=c0_min,
        c0_max=c0_max,
        mass0=reduce(c0, "integral"),
        energy_bound=energy_bound,
        check_l2=params.kappa == 0 and config.solver.advection == "upwind",
    )

    logger.info(
        "Starting run %r on a %dx%d grid up to t=%g (alpha=%g, R=%g, k=%g, kappa=%g)",
        config.name,
        grid.nx,
        grid.ny,
        config.time.t_end,
        params.alpha,
        params.R,
        params.k,
        params.kappa,
    )

    state = SimState(t=0.0, c=c0, u=FaceField.zeros(grid), p=CellField.zeros(grid))
    series = TimeSeries()

    def sample() -> None:
        row = sample_diagnostics(state.t, state.c, state.u, sigma0_sq)
        series.append(**row)
        monitor.after_sample(state, row)
        logger.debug("t=%g energy=%.6g chi=%s", state.t, row["energy"], row["mixing"])
        for sink in sinks:
            sink.on_sample(state, series)

    try:
        _solve_flow(state, params, config, monitor)
    except SolverConvergenceError as exc:
        raise SimulationError(exc, 0) from exc
    sample()

    for target in sample_times(config.time.t_end, config.time.sample_interval):
        landed = False
        while not landed:
            dt = stable_dt(state.u, params, grid, config.time.safety, config.time.dt_max)
            remaining = target - state.t
            if dt >= remaining * (1 - TIME_SNAP_RTOL):
                dt = remaining
                landed = True

            c_before = state.c
            try:
                c_next, report = advance(
                    state.c,
                    state.u,
                    dt,
                    params,
                    config.solver.transport_tol,
                    advection=config.solver.advection,
                    reaction=config.solver.reaction,
                )
            except (SolverConvergenceError, CFLViolationError) as exc:
                raise SimulationError(exc, state.step_count + 1) from exc

            state.c = c_next
            state.t = target if landed else state.t + dt
            state.step_count += 1
            state.transport_iterations += report.iterations
            state.mass_factor *= report.mass_factor
            monitor.after_step(state, c_before, report)

            if landed or state.step_count % config.solver.pressure_resolve_interval == 0:
                try:
                    _solve_flow(state, params, config, monitor)
                except SolverConvergenceError as exc:
                    raise SimulationError(exc, state.step_count) from exc

        sample()
        logger.info(
            "Run %r: t=%g after %d steps, energy=%.6g",
            config.name,
            state.t,
            state.step_count,
            series.energy[-1],
        )

    for sink in sinks:
        sink.on_finish(state, series)

    logger.info(
        "Finished run %r: %d steps, %d pressure solves (%d iterations), %d transport iterations",
        config.name,
        state.step_count,
        state.pressure_solves,
        state.pressure_iterations,
        state.transport_iterations,
    )

    return RunResult(
        state=state,
        series=series,
        sigma0_sq=sigma0_sq,
        energy_bound=energy_bound,
        checks=monitor.checks,
    )
