"""
Matrix-free linear algebra on cell-centred arrays

The operators that appear in the pressure and transport solves share one form

.. math::

    A x = s x - \\nabla_h \\cdot (m \\nabla_h x)

with a non-negative diagonal shift ``s`` and non-negative face coefficients
``m``. Both are symmetric positive semidefinite with respect to the plain sum
over cells, which is what conjugate gradients needs. With ``s = 0`` the
operator is singular (constants are in its null space) and iterates are
kept at zero mean.
"""
from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Protocol

import numpy as np
from attrs import define, field, frozen

from fingering.exceptions import SolverConvergenceError
from fingering.porous.grid import NDArrayFloat, StructuredGrid

logger = logging.getLogger(__name__)

RESIDUAL_REFRESH_INTERVAL = 50
"""Number of iterations between recomputations of the true residual"""


class Preconditioner(Protocol):
    """
    Symmetric positive definite approximation of an operator's inverse
    """

    def __call__(self, r: NDArrayFloat) -> NDArrayFloat:
        """
        Apply the approximate inverse to a residual
        """


@define(eq=False)
class FaceCoefficientOperator:
    """
    Operator ``s x - div(m grad x)`` on a structured grid

    Boundary face coefficients are ignored, the boundary-normal flux is always
    zero.
    """

    grid: StructuredGrid
    """Grid the operator acts on"""

    mx: NDArrayFloat
    """Coefficients on the vertical faces, shape ``(nx + 1, ny)``"""

    my: NDArrayFloat
    """Coefficients on the horizontal faces, shape ``(nx, ny + 1)``"""

    shift: float | NDArrayFloat = 0.0
    """Diagonal shift, scalar or one value per cell"""

    _diagonal: NDArrayFloat | None = field(default=None, init=False, repr=False)

    @property
    def singular(self) -> bool:
        """Whether constants are in the null space"""
        return bool(np.all(np.asarray(self.shift) == 0.0))

    def apply(self, x: NDArrayFloat) -> NDArrayFloat:
        """
        Evaluate ``A x``

        Parameters
        ----------
        x
            Cell-centred array

        Returns
        -------
            Cell-centred array
        """
        dx2 = self.grid.dx**2
        dy2 = self.grid.dy**2

        fx = self.mx[1:-1, :] * np.diff(x, axis=0) / dx2
        fy = self.my[:, 1:-1] * np.diff(x, axis=1) / dy2

        out = self.shift * x
        out[:-1, :] -= fx
        out[1:, :] += fx
        out[:, :-1] -= fy
        out[:, 1:] += fy

        return out

    def diagonal(self) -> NDArrayFloat:
        """
        Diagonal of the operator
        """
        if self._diagonal is None:
            dx2 = self.grid.dx**2
            dy2 = self.grid.dy**2
            diag = np.zeros(self.grid.shape) + self.shift
            diag[:-1, :] += self.mx[1:-1, :] / dx2
            diag[1:, :] += self.mx[1:-1, :] / dx2
            diag[:, :-1] += self.my[:, 1:-1] / dy2
            diag[:, 1:] += self.my[:, 1:-1] / dy2
            self._diagonal = diag

        return self._diagonal


@frozen
class JacobiPreconditioner:
    """
    Diagonal scaling by the inverse of the operator's diagonal
    """

    inverse_diagonal: NDArrayFloat
    """Reciprocal of the operator diagonal"""

    project_mean: bool = False
    """Remove the mean of the result, used for singular operators"""

    @classmethod
    def from_operator(cls, operator: FaceCoefficientOperator) -> JacobiPreconditioner:
        """
        Build the preconditioner for ``operator``
        """
        diag = operator.diagonal()
        inverse = np.zeros_like(diag)
        np.divide(1.0, diag, out=inverse, where=diag > 0)

        return cls(inverse, project_mean=operator.singular)

    def __call__(self, r: NDArrayFloat) -> NDArrayFloat:
        """
        Apply the preconditioner
        """
        z = self.inverse_diagonal * r
        if self.project_mean:
            z -= z.mean()

        return z


@frozen
class CGResult:
    """
    Result of a conjugate gradient solve
    """

    x: NDArrayFloat
    """Solution"""

    iterations: int
    """Number of iterations taken"""

    residual: float
    """Final relative residual in the 2-norm"""

    residual_history: tuple[float, ...]
    """Relative 2-norm residual at every iteration, starting from the initial guess"""

    final_residual: NDArrayFloat
    """Final residual ``b - A x``"""


def _converged(r: NDArrayFloat, limit2: float, limit_inf: float) -> bool:
    return bool(
        np.linalg.norm(r) <= limit2 and np.max(np.abs(r)) <= limit_inf
    )


def conjugate_gradient(  # noqa: PLR0913
    apply: Callable[[NDArrayFloat], NDArrayFloat],
    b: NDArrayFloat,
    *,
    x0: NDArrayFloat | None = None,
    preconditioner: Preconditioner | None = None,
    tol: float = 1e-10,
    atol: float = 0.0,
    max_iterations: int = 1000,
    project_mean: bool = False,
    name: str = "CG",
) -> CGResult:
    """
    Preconditioned conjugate gradients for a symmetric positive (semi)definite system

    Convergence requires the residual to fall below ``tol`` relative to the
    right-hand side, or below the absolute floor ``atol``, in both the
    2-norm and the max-norm. The recursively updated residual is replaced
    by the true residual every :data:`RESIDUAL_REFRESH_INTERVAL` iterations
    and before declaring convergence.

    Parameters
    ----------
    apply
        Matrix-free application of the operator
    b
        Right-hand side
    x0
        Initial guess, zero if not provided
    preconditioner
        Approximate inverse, identity if not provided
    tol
        Relative residual target
    atol
        Absolute residual floor in the max-norm, scaled by ``sqrt(b.size)``
        for the 2-norm. A right-hand side made only of rounding noise has no
        meaningful relative target. When ``b`` itself is below the floor the
        zero solution is returned without iterating.
    max_iterations
        Iteration cap
    project_mean
        Keep the right-hand side and all iterates at zero mean. Required when
        the operator annihilates constants.
    name
        Name used in log messages and errors

    Raises
    ------
    SolverConvergenceError
        The iteration cap was reached before convergence

    Returns
    -------
        Solution and convergence information
    """
    if project_mean:
        b = b - b.mean()

    b_norm2 = float(np.linalg.norm(b))
    b_norminf = float(np.max(np.abs(b)))
    limit2 = max(tol * b_norm2, atol * float(np.sqrt(b.size)))
    limit_inf = max(tol * b_norminf, atol)

    if b_norm2 == 0.0:
        zero = np.zeros_like(b)
        return CGResult(zero, 0, 0.0, (0.0,), zero.copy())

    if atol > 0 and _converged(b, limit2, limit_inf):
        # Zero already meets the absolute floor, the initial guess is ignored
        logger.debug("%s: right-hand side below the absolute floor", name)
        return CGResult(np.zeros_like(b), 0, 1.0, (1.0,), b.copy())

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if project_mean:
        x -= x.mean()

    def precondition(r: NDArrayFloat) -> NDArrayFloat:
        z = r.copy() if preconditioner is None else preconditioner(r)
        if project_mean:
            z -= z.mean()
        return z

    r = b - apply(x)
    history = [float(np.linalg.norm(r)) / b_norm2]

    if _converged(r, limit2, limit_inf):
        return CGResult(x, 0, history[-1], tuple(history), r)

    z = precondition(r)
    p = z.copy()
    rz = float(np.sum(r * z))

    for iteration in range(1, max_iterations + 1):
        ap = apply(p)
        pap = float(np.sum(p * ap))
        if pap <= 0.0:
            # Search direction has left the range of the operator
            break

        step = rz / pap
        x += step * p

        if iteration % RESIDUAL_REFRESH_INTERVAL == 0:
            r = b - apply(x)
        else:
            r -= step * ap

        history.append(float(np.linalg.norm(r)) / b_norm2)

        if _converged(r, limit2, limit_inf):
            r = b - apply(x)
            history[-1] = float(np.linalg.norm(r)) / b_norm2
            if _converged(r, limit2, limit_inf):
                logger.debug("%s converged in %d iterations", name, iteration)
                return CGResult(x, iteration, history[-1], tuple(history), r)

        z = precondition(r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    raise SolverConvergenceError(name, len(history) - 1, history)
