"""
Geometric multigrid preconditioner for cell-centred face-coefficient operators

One V-cycle from a zero initial guess is applied per preconditioner call.
Transfers are piecewise constant: prolongation copies a coarse value into its
four children and restriction averages the four children, i.e. the scaled
transpose of the prolongation. Coarse operators are the Galerkin products of
these transfers, which for face-coefficient operators amounts to summing the
two fine face coefficients covered by each coarse face. Smoothing is damped
Jacobi with the same number of sweeps before and after the coarse
correction, so the cycle is a symmetric positive definite operator and can
be used inside conjugate gradients.
"""
from __future__ import annotations

import logging

import numpy as np
from attrs import define, field

from fingering.porous.grid import NDArrayFloat
from fingering.porous.linalg import FaceCoefficientOperator

logger = logging.getLogger(__name__)

DIRECT_SOLVE_MAX_CELLS = 512
"""Coarsest levels with at most this many cells are solved with a dense pseudo-inverse"""

BOTTOM_SWEEPS = 50
"""Jacobi sweeps used on the coarsest level when it is too large for a dense solve"""


def restrict(r: NDArrayFloat) -> NDArrayFloat:
    """
    Average each block of four fine cells onto the coarse cell they form
    """
    nx, ny = r.shape
    return r.reshape(nx // 2, 2, ny // 2, 2).mean(axis=(1, 3))  # type: ignore[no-any-return]


def prolong(e: NDArrayFloat) -> NDArrayFloat:
    """
    Copy each coarse value into its four fine children
    """
    return np.repeat(np.repeat(e, 2, axis=0), 2, axis=1)


def coarsen_operator(operator: FaceCoefficientOperator) -> FaceCoefficientOperator:
    """
    Galerkin coarse-grid operator for piecewise-constant transfers

    Parameters
    ----------
    operator
        Fine operator, its grid must support coarsening

    Returns
    -------
        Operator on the coarsened grid
    """
    coarse_grid = operator.grid.coarsen()

    mx = operator.mx[::2, :]
    mx_coarse = mx[:, 0::2] + mx[:, 1::2]

    my = operator.my[:, ::2]
    my_coarse = my[0::2, :] + my[1::2, :]

    shift = operator.shift
    if np.ndim(shift) > 0:
        shift = restrict(np.asarray(shift))

    return FaceCoefficientOperator(coarse_grid, mx_coarse, my_coarse, shift)


@define(eq=False)
class _Level:
    operator: FaceCoefficientOperator
    inverse_diagonal: NDArrayFloat = field(init=False)

    def __attrs_post_init__(self) -> None:
        diag = self.operator.diagonal()
        self.inverse_diagonal = np.zeros_like(diag)
        np.divide(1.0, diag, out=self.inverse_diagonal, where=diag > 0)

    def smooth(self, x: NDArrayFloat, b: NDArrayFloat, sweeps: int, omega: float) -> NDArrayFloat:
        for _ in range(sweeps):
            x = x + omega * self.inverse_diagonal * (b - self.operator.apply(x))
        return x


def _dense_inverse(operator: FaceCoefficientOperator) -> NDArrayFloat:
    n = operator.grid.nx * operator.grid.ny
    columns = np.empty((n, n))
    unit = np.zeros(n)
    for k in range(n):
        unit[k] = 1.0
        columns[:, k] = operator.apply(unit.reshape(operator.grid.shape)).ravel()
        unit[k] = 0.0

    # pinv handles the constant null space of the pure Neumann operator
    return np.linalg.pinv(columns)  # type: ignore[no-any-return]


@define(eq=False)
class MultigridPreconditioner:
    """
    V-cycle preconditioner

    Use :meth:`from_operator` to build the level hierarchy.
    """

    levels: list[_Level]
    """Levels ordered from finest to coarsest"""

    coarse_inverse: NDArrayFloat | None
    """Dense pseudo-inverse on the coarsest level, if small enough"""

    pre_sweeps: int = 2
    post_sweeps: int = 2
    omega: float = 0.8
    """Jacobi damping factor"""

    project_mean: bool = False
    """Remove the mean on every level, used for singular operators"""

    @classmethod
    def from_operator(
        cls,
        operator: FaceCoefficientOperator,
        *,
        pre_sweeps: int = 2,
        post_sweeps: int = 2,
        omega: float = 0.8,
    ) -> MultigridPreconditioner:
        """
        Build the multigrid hierarchy for an operator

        Coarsening stops once a level has at most
        :data:`DIRECT_SOLVE_MAX_CELLS` cells or its grid cannot be halved.

        Parameters
        ----------
        operator
            Finest-level operator
        pre_sweeps
            Jacobi sweeps before the coarse correction
        post_sweeps
            Jacobi sweeps after the coarse correction
        omega
            Jacobi damping factor

        Returns
        -------
            Preconditioner
        """
        levels = [_Level(operator)]
        current = operator
        while (
            current.grid.can_coarsen
            and current.grid.nx * current.grid.ny > DIRECT_SOLVE_MAX_CELLS
        ):
            current = coarsen_operator(current)
            levels.append(_Level(current))

        coarsest = levels[-1].operator.grid
        coarse_inverse = None
        if coarsest.nx * coarsest.ny <= DIRECT_SOLVE_MAX_CELLS:
            coarse_inverse = _dense_inverse(levels[-1].operator)

        logger.debug(
            "Multigrid hierarchy with %d levels, coarsest %dx%d",
            len(levels),
            coarsest.nx,
            coarsest.ny,
        )

        return cls(
            levels=levels,
            coarse_inverse=coarse_inverse,
            pre_sweeps=pre_sweeps,
            post_sweeps=post_sweeps,
            omega=omega,
            project_mean=operator.singular,
        )

    def __call__(self, r: NDArrayFloat) -> NDArrayFloat:
        """
        Apply one V-cycle to ``r`` starting from zero
        """
        return self._cycle(0, r)

    def _project(self, x: NDArrayFloat) -> NDArrayFloat:
        if self.project_mean:
            return x - x.mean()  # type: ignore[no-any-return]
        return x

    def _cycle(self, depth: int, b: NDArrayFloat) -> NDArrayFloat:
        level = self.levels[depth]
        b = self._project(b)

        if depth == len(self.levels) - 1:
            if self.coarse_inverse is not None:
                x = (self.coarse_inverse @ b.ravel()).reshape(b.shape)
            else:
                x = level.smooth(np.zeros_like(b), b, BOTTOM_SWEEPS, self.omega)
            return self._project(x)

        x = level.smooth(np.zeros_like(b), b, self.pre_sweeps, self.omega)
        residual = b - level.operator.apply(x)
        correction = self._cycle(depth + 1, restrict(residual))
        x = self._project(x + prolong(correction))
        x = level.smooth(x, b, self.post_sweeps, self.omega)

        return self._project(x)
