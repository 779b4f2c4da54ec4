"""
Structured grid, staggered fields and discrete calculus

Scalars live at cell centres, vector components on the cell faces (MAC
layout). ``values[i, j]`` is the cell with centre ``((i + 1/2) dx, (j + 1/2) dy)``
so the first array axis runs along x.

The cell inner product weights every cell by ``dx dy`` and the face inner
product weights every face by ``dx dy`` too. With these weights
:func:`divergence` is minus the adjoint of :func:`gradient_at_faces` for face
fields with zero boundary-normal entries.
"""
from __future__ import annotations

from typing import Literal

import numpy as np
import numpy.typing as npt
from attrs import define, field, frozen, validators

from fingering.exceptions import GridMismatchError, NonPositiveValueError

NDArrayFloat = npt.NDArray[np.float64]

ReductionKind = Literal["integral", "mean", "L1", "L2", "L2_squared", "Linf", "variance"]
"""Scalar reductions supported by :func:`reduce`"""

_MIN_CELLS = 2
_MIN_COARSEN_CELLS = 4


@frozen
class StructuredGrid:
    """
    Uniform rectangular grid on ``(0, Lx) x (0, Ly)``
    """

    Lx: float = field(converter=float, validator=validators.gt(0))
    """Domain extent along x"""

    Ly: float = field(converter=float, validator=validators.gt(0))
    """Domain extent along y"""

    nx: int = field(validator=[validators.instance_of(int), validators.ge(_MIN_CELLS)])
    """Number of cells along x"""

    ny: int = field(validator=[validators.instance_of(int), validators.ge(_MIN_CELLS)])
    """Number of cells along y"""

    @property
    def dx(self) -> float:
        """Cell size along x"""
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        """Cell size along y"""
        return self.Ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of a cell-centred array"""
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        """Measure of the domain"""
        return self.Lx * self.Ly

    @property
    def cell_volume(self) -> float:
        """Measure of one cell"""
        return self.dx * self.dy

    @property
    def x_centers(self) -> NDArrayFloat:
        """x coordinate of the cell centres"""
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y_centers(self) -> NDArrayFloat:
        """y coordinate of the cell centres"""
        return (np.arange(self.ny) + 0.5) * self.dy

    @property
    def x_faces(self) -> NDArrayFloat:
        """x coordinate of the vertical faces"""
        return np.arange(self.nx + 1) * self.dx

    @property
    def y_faces(self) -> NDArrayFloat:
        """y coordinate of the horizontal faces"""
        return np.arange(self.ny + 1) * self.dy

    @property
    def can_coarsen(self) -> bool:
        """
        Whether :meth:`coarsen` produces a valid grid

        Both cell counts must be even and at least four.
        """
        return (
            self.nx % 2 == 0
            and self.ny % 2 == 0
            and self.nx >= _MIN_COARSEN_CELLS
            and self.ny >= _MIN_COARSEN_CELLS
        )

    def coarsen(self) -> StructuredGrid:
        """
        Grid covering the same domain with half the cells in each direction

        Raises
        ------
        ValueError
            The grid cannot be coarsened, see :attr:`can_coarsen`
        """
        if not self.can_coarsen:
            raise ValueError(f"Cannot coarsen grid with {self.nx}x{self.ny} cells")  # noqa: TRY003

        return StructuredGrid(Lx=self.Lx, Ly=self.Ly, nx=self.nx // 2, ny=self.ny // 2)


def _check_finite(values: NDArrayFloat, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")  # noqa: TRY003


@define(eq=False)
class CellField:
    """
    Scalar sampled at the cell centres
    """

    values: NDArrayFloat = field(converter=lambda v: np.asarray(v, dtype=np.float64))
    """Array of shape ``(nx, ny)``"""

    grid: StructuredGrid
    """Grid the values live on"""

    def __attrs_post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise ValueError(  # noqa: TRY003
                f"Cell values have shape {self.values.shape}, "
                f"grid expects {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: StructuredGrid) -> CellField:
        """Zero field on ``grid``"""
        return cls(np.zeros(grid.shape), grid)

    @classmethod
    def full(cls, grid: StructuredGrid, value: float) -> CellField:
        """Constant field on ``grid``"""
        return cls(np.full(grid.shape, float(value)), grid)

    def copy(self) -> CellField:
        """Deep copy of the values, the grid is shared"""
        return CellField(self.values.copy(), self.grid)

    def check_finite(self) -> None:
        """
        Raise if any value is NaN or infinite

        Raises
        ------
        ValueError
            A value is not finite
        """
        _check_finite(self.values, "Cell field")


@define(eq=False)
class FaceField:
    """
    Vector quantity sampled at the cell faces

    ``xvals[i, j]`` lives on the vertical face at ``x = i dx`` between cells
    ``(i - 1, j)`` and ``(i, j)``. ``yvals`` is laid out in the same way along y.
    """

    xvals: NDArrayFloat = field(converter=lambda v: np.asarray(v, dtype=np.float64))
    """Array of shape ``(nx + 1, ny)``"""

    yvals: NDArrayFloat = field(converter=lambda v: np.asarray(v, dtype=np.float64))
    """Array of shape ``(nx, ny + 1)``"""

    grid: StructuredGrid
    """Grid the values live on"""

    def __attrs_post_init__(self) -> None:
        nx, ny = self.grid.shape
        if self.xvals.shape != (nx + 1, ny) or self.yvals.shape != (nx, ny + 1):
            raise ValueError(  # noqa: TRY003
                f"Face values have shapes {self.xvals.shape} and {self.yvals.shape}, "
                f"grid expects {(nx + 1, ny)} and {(nx, ny + 1)}"
            )

    @classmethod
    def zeros(cls, grid: StructuredGrid) -> FaceField:
        """Zero face field on ``grid``"""
        nx, ny = grid.shape
        return cls(np.zeros((nx + 1, ny)), np.zeros((nx, ny + 1)), grid)

    def copy(self) -> FaceField:
        """Deep copy of the values, the grid is shared"""
        return FaceField(self.xvals.copy(), self.yvals.copy(), self.grid)

    def zero_boundary(self) -> FaceField:
        """
        Set the boundary-normal entries to zero in place

        Returns
        -------
            ``self``, for chaining
        """
        self.xvals[0, :] = 0.0
        self.xvals[-1, :] = 0.0
        self.yvals[:, 0] = 0.0
        self.yvals[:, -1] = 0.0

        return self

    def check_finite(self) -> None:
        """
        Raise if any value is NaN or infinite

        Raises
        ------
        ValueError
            A value is not finite
        """
        _check_finite(self.xvals, "Face field (x)")
        _check_finite(self.yvals, "Face field (y)")


def check_same_grid(*fields: CellField | FaceField) -> StructuredGrid:
    """
    Check that all fields share one grid

    Parameters
    ----------
    *fields
        Fields to compare

    Raises
    ------
    GridMismatchError
        Two of the fields live on different grids

    Returns
    -------
        The common grid
    """
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(grid, other.grid)

    return grid


def gradient_at_faces(f: CellField) -> FaceField:
    """
    Discrete gradient of a cell field

    Boundary faces are zero, which is the homogeneous Neumann condition.

    Parameters
    ----------
    f
        Cell field

    Returns
    -------
        Centred difference of neighbouring cells on each interior face
    """
    grid = f.grid
    out = FaceField.zeros(grid)
    out.xvals[1:-1, :] = np.diff(f.values, axis=0) / grid.dx
    out.yvals[:, 1:-1] = np.diff(f.values, axis=1) / grid.dy

    return out


def divergence(F: FaceField) -> CellField:
    """
    Discrete divergence of a face field

    Parameters
    ----------
    F
        Face field

    Returns
    -------
        Net outflow of each cell per unit volume
    """
    grid = F.grid
    values = np.diff(F.xvals, axis=0) / grid.dx + np.diff(F.yvals, axis=1) / grid.dy

    return CellField(values, grid)


def laplacian(f: CellField) -> CellField:
    """
    Five-point Laplacian with homogeneous Neumann boundaries
    """
    return divergence(gradient_at_faces(f))


def face_harmonic_mean(f: CellField) -> FaceField:
    """
    Harmonic mean of the two cells adjacent to each face

    Boundary faces copy the value of their single adjacent cell.

    Parameters
    ----------
    f
        Strictly positive cell field

    Raises
    ------
    NonPositiveValueError
        ``f`` has a zero or negative entry

    Returns
    -------
        Face field of harmonic means
    """
    v = f.values
    minimum = float(v.min())
    if minimum <= 0:
        raise NonPositiveValueError("Harmonic-mean input", minimum)

    out = _copy_to_boundary_faces(f)
    out.xvals[1:-1, :] = 2.0 * v[:-1, :] * v[1:, :] / (v[:-1, :] + v[1:, :])
    out.yvals[:, 1:-1] = 2.0 * v[:, :-1] * v[:, 1:] / (v[:, :-1] + v[:, 1:])

    return out


def face_arithmetic_mean(f: CellField) -> FaceField:
    """
    Arithmetic mean of the two cells adjacent to each face

    Boundary faces copy the value of their single adjacent cell.
    """
    v = f.values
    out = _copy_to_boundary_faces(f)
    out.xvals[1:-1, :] = 0.5 * (v[:-1, :] + v[1:, :])
    out.yvals[:, 1:-1] = 0.5 * (v[:, :-1] + v[:, 1:])

    return out


def _copy_to_boundary_faces(f: CellField) -> FaceField:
    out = FaceField.zeros(f.grid)
    out.xvals[0, :] = f.values[0, :]
    out.xvals[-1, :] = f.values[-1, :]
    out.yvals[:, 0] = f.values[:, 0]
    out.yvals[:, -1] = f.values[:, -1]

    return out


def cell_inner(f: CellField, q: CellField) -> float:
    """
    Volume-weighted inner product of two cell fields

    Raises
    ------
    GridMismatchError
        The fields live on different grids
    """
    grid = check_same_grid(f, q)

    return float(np.sum(f.values * q.values) * grid.cell_volume)


def face_inner(F: FaceField, G: FaceField) -> float:
    """
    Inner product of two face fields, each face weighted by ``dx dy``

    Raises
    ------
    GridMismatchError
        The fields live on different grids
    """
    grid = check_same_grid(F, G)
    total = np.sum(F.xvals * G.xvals) + np.sum(F.yvals * G.yvals)

    return float(total * grid.cell_volume)


def max_abs(F: FaceField) -> float:
    """
    Largest absolute entry of a face field
    """
    return float(max(np.max(np.abs(F.xvals)), np.max(np.abs(F.yvals))))


def reduce(f: CellField, kind: ReductionKind) -> float:  # noqa: PLR0911
    """
    Reduce a cell field to a scalar

    Parameters
    ----------
    f
        Cell field
    kind
        Reduction to apply

        - ``integral``: sum of ``f dx dy``
        - ``mean``: integral divided by the domain area
        - ``L1``, ``L2``, ``Linf``: norms of ``f`` over the domain
        - ``L2_squared``: square of the ``L2`` norm
        - ``variance``: mean of ``(f - mean)**2``

    Raises
    ------
    ValueError
        Unknown reduction

    Returns
    -------
        Reduced value
    """
    grid = f.grid
    v = f.values
    dv = grid.cell_volume

    if kind == "integral":
        return float(np.sum(v) * dv)
    if kind == "mean":
        return float(np.sum(v) * dv / grid.area)
    if kind == "L1":
        return float(np.sum(np.abs(v)) * dv)
    if kind == "L2_squared":
        return float(np.sum(v * v) * dv)
    if kind == "L2":
        return float(np.sqrt(np.sum(v * v) * dv))
    if kind == "Linf":
        return float(np.max(np.abs(v)))
    if kind == "variance":
        mean = np.sum(v) * dv / grid.area
        return float(np.sum((v - mean) ** 2) * dv / grid.area)

    raise ValueError(f"Unknown reduction: {kind!r}")  # noqa: TRY003
