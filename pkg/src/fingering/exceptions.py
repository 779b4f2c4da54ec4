"""
Exception classes
"""
from __future__ import annotations

from collections.abc import Sequence


class ConfigParseError(ValueError):
    """
    Error when a configuration document cannot be read
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"Could not parse configuration: {location}{message}")


class ConfigValidationError(ValueError):
    """
    Error when a configuration document breaks one or more constraints

    All violations are collected before raising
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = tuple(violations)
        listing = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(
            f"Invalid configuration ({len(self.violations)} problem(s)):\n{listing}"
        )


class GridMismatchError(ValueError):
    """
    Error when fields defined on different grids are combined
    """

    def __init__(self, left: object, right: object):
        super().__init__(f"Fields live on different grids: {left} != {right}")


class NonPositiveValueError(ValueError):
    """
    Error when an operation requires strictly positive data
    """

    def __init__(self, what: str, minimum: float):
        self.minimum = minimum
        super().__init__(f"{what} must be strictly positive (minimum: {minimum!r})")


class InsufficientSamplesError(ValueError):
    """
    Error when a fitting window holds too few samples
    """

    def __init__(self, n_samples: int, required: int):
        self.n_samples = n_samples
        super().__init__(
            f"Need at least {required} samples in the fit window, got {n_samples}"
        )


class SolverConvergenceError(RuntimeError):
    """
    Error when an iterative linear solve hits its iteration cap
    """

    def __init__(self, name: str, iterations: int, residual_history: Sequence[float]):
        self.iterations = iterations
        self.residual_history = tuple(residual_history)
        last = self.residual_history[-1] if self.residual_history else float("nan")
        super().__init__(
            f"{name} did not converge in {iterations} iterations "
            f"(relative residual {last:.3e})"
        )


class CFLViolationError(ValueError):
    """
    Error when a transport step is requested with too large a time step
    """

    def __init__(self, cfl: float, dt: float):
        self.cfl = cfl
        self.dt = dt
        super().__init__(f"Advective CFL number {cfl:.6g} > 1 for dt={dt!r}")


class InvariantViolationError(RuntimeError):
    """
    Error when a runtime invariant of the simulation fails
    """

    def __init__(self, invariant: str, detail: str, step: int, time: float):
        self.invariant = invariant
        self.step = step
        self.time = time
        super().__init__(f"{invariant} violated at step {step} (t={time!r}): {detail}")


class SimulationError(RuntimeError):
    """
    Raised when a simulation fails for any reason other than an invariant
    """

    def __init__(self, exc: Exception, step: int):
        self.exc = exc
        self.step = step
        super().__init__(self.exc)

    def __str__(self) -> str:
        """
        Get string representation of self
        """
        return f"simulation failed at step {self.step}: {self.exc}"
