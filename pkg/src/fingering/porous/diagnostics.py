"""
Scalar observables, theoretical bounds and decay-rate fits
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Literal

import numpy as np
import pandas as pd
import scipy.stats
from attrs import define, field, frozen

from fingering.exceptions import InsufficientSamplesError, NonPositiveValueError
from fingering.porous.grid import CellField, FaceField, NDArrayFloat, StructuredGrid, reduce
from fingering.porous.model import PhysicalParams

logger = logging.getLogger(__name__)

DecayNorm = Literal["L1", "Lp", "L2_squared"]
MixingBoundVariant = Literal["linear", "paper", "dimensional"]
"""
Form of the Poincare-based mixing bound

``dimensional`` uses ``M**2`` in the exponent, which follows from
``||c - mean|| <= M ||grad c||``. ``linear`` uses ``M``, as the bound is
usually printed, and ``paper`` is an alias of it.
"""

TIMESERIES_COLUMNS = ("t", "energy", "mean", "variance", "mixing", "l1", "l2", "linf")
"""Column order of a :class:`TimeSeries`"""

MIXING_SLACK = 1e-9
MIN_FIT_SAMPLES = 3
DEFAULT_FIT_FRACTION = 0.5


@define
class TimeSeries:
    """
    Diagnostics sampled over time

    ``mixing`` is NaN when the initial variance is zero.
    """

    t: list[float] = field(factory=list)
    energy: list[float] = field(factory=list)
    mean: list[float] = field(factory=list)
    variance: list[float] = field(factory=list)
    mixing: list[float] = field(factory=list)
    l1: list[float] = field(factory=list)
    l2: list[float] = field(factory=list)
    linf: list[float] = field(factory=list)

    def __len__(self) -> int:
        """Number of samples"""
        return len(self.t)

    def append(self, **row: float | None) -> None:
        """
        Add one sample

        Parameters
        ----------
        **row
            One value for every column in :data:`TIMESERIES_COLUMNS`. ``mixing``
            may be ``None``.
        """
        missing = set(TIMESERIES_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"Missing columns: {sorted(missing)}")  # noqa: TRY003

        for name in TIMESERIES_COLUMNS:
            value = row[name]
            getattr(self, name).append(math.nan if value is None else float(value))

    def column(self, name: str) -> NDArrayFloat:
        """
        Values of one column as an array

        Raises
        ------
        KeyError
            Unknown column
        """
        if name not in TIMESERIES_COLUMNS:
            raise KeyError(name)

        return np.asarray(getattr(self, name), dtype=np.float64)

    def to_frame(self) -> pd.DataFrame:
        """
        Convert to a :class:`pd.DataFrame` with one row per sample
        """
        return pd.DataFrame({name: self.column(name) for name in TIMESERIES_COLUMNS})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> TimeSeries:
        """
        Build from a :class:`pd.DataFrame` with the columns of :data:`TIMESERIES_COLUMNS`
        """
        return cls(**{name: [float(v) for v in frame[name]] for name in TIMESERIES_COLUMNS})

    def validate(self) -> None:
        """
        Check the invariants of the series

        Raises
        ------
        ValueError
            Times are not strictly increasing, an entry is not finite or a
            mixing value lies outside ``[0, 1]``
        """
        t = self.column("t")
        if np.any(np.diff(t) <= 0):
            raise ValueError("Sample times are not strictly increasing")  # noqa: TRY003

        for name in TIMESERIES_COLUMNS:
            values = self.column(name)
            if name == "mixing":
                values = values[~np.isnan(values)]
            if not np.all(np.isfinite(values)):
                raise ValueError(f"Column {name!r} has non-finite entries")  # noqa: TRY003

        mixing = self.column("mixing")
        mixing = mixing[~np.isnan(mixing)]
        if np.any(mixing < -MIXING_SLACK) or np.any(mixing > 1 + MIXING_SLACK):
            raise ValueError("Mixing index outside [0, 1]")  # noqa: TRY003


@frozen
class DecayFit:
    """
    Least-squares fit of ``log(values) = intercept - rate * t``
    """

    rate: float
    """Fitted decay rate"""

    intercept: float
    """Fitted value of ``log(values)`` at ``t = 0``"""

    window: tuple[float, float]
    """Time window of the fit"""

    residual: float
    """Root mean square of the log residuals"""

    n_samples: int
    """Number of samples in the window"""


@frozen
class EnergyBound:
    """
    Upper bound on the kinetic energy
    """

    value: float
    """Value of the bound formula"""

    valid: bool
    """Whether the assumptions behind the bound hold"""

    reasons: tuple[str, ...] = ()
    """Assumptions that failed"""


def kinetic_energy(u: FaceField) -> float:
    """
    Total kinetic energy ``sum((u_x**2 + u_y**2) dx dy)`` over the cells

    Each velocity component is averaged from the two faces of a cell onto its
    centre before squaring.
    """
    grid = u.grid
    ux = 0.5 * (u.xvals[:-1, :] + u.xvals[1:, :])
    uy = 0.5 * (u.yvals[:, :-1] + u.yvals[:, 1:])

    return float(np.sum(ux * ux + uy * uy) * grid.cell_volume)


def mixing_stats(c: CellField, sigma0_sq: float) -> tuple[float, float, float | None]:
    """
    Mean, variance and degree of mixing of a concentration field

    Parameters
    ----------
    c
        Concentration
    sigma0_sq
        Variance of the initial concentration

    Returns
    -------
        ``(mean, variance, chi)`` with ``chi = 1 - variance / sigma0_sq``.
        ``chi`` is ``None`` when ``sigma0_sq <= 0``.
    """
    mean = reduce(c, "mean")
    variance = reduce(c, "variance")
    if sigma0_sq <= 0:
        return mean, variance, None

    return mean, variance, 1.0 - variance / sigma0_sq


def sample_diagnostics(
    t: float, c: CellField, u: FaceField, sigma0_sq: float
) -> dict[str, float | None]:
    """
    One row of a :class:`TimeSeries`
    """
    mean, variance, chi = mixing_stats(c, sigma0_sq)

    return {
        "t": t,
        "energy": kinetic_energy(u),
        "mean": mean,
        "variance": variance,
        "mixing": chi,
        "l1": reduce(c, "L1"),
        "l2": reduce(c, "L2"),
        "linf": reduce(c, "Linf"),
    }


def theoretical_decay_rate(params: PhysicalParams, norm: DecayNorm) -> float:
    """
    Exponential decay rate of a norm of the concentration under reaction

    Parameters
    ----------
    params
        Model coefficients
    norm
        ``L1`` and ``Lp`` decay at ``kappa / (1 + k)``. The squared L2 norm
        decays twice as fast.

    Returns
    -------
        Decay rate
    """
    rate = params.kappa / params.retardation
    if norm in ("L1", "Lp"):
        return rate
    if norm == "L2_squared":
        return 2.0 * rate

    raise ValueError(f"Unknown norm: {norm!r}")  # noqa: TRY003


def decay_envelope(t: float | NDArrayFloat, params: PhysicalParams, norm0: float) -> NDArrayFloat:
    """
    Upper envelope ``norm0 exp(-kappa t / (1 + k))`` of any Lp norm
    """
    return norm0 * np.exp(-params.kappa * np.asarray(t) / params.retardation)  # type: ignore[no-any-return]


def energy_upper_bound(params: PhysicalParams, c0: CellField) -> EnergyBound:
    """
    Upper bound on the kinetic energy for all times

    The bound is ``exp(-2 R) (|Omega| + 2 alpha int(c0) + alpha**2 ||c0||**2)``.
    It assumes ``c0 >= 1`` everywhere, unit permeability and unit gravity.
    The formula value is returned in every case, with :attr:`EnergyBound.valid`
    telling whether it is a bound.

    Parameters
    ----------
    params
        Model coefficients
    c0
        Initial concentration

    Returns
    -------
        Energy bound
    """
    grid = c0.grid
    value = math.exp(-2.0 * params.R) * (
        grid.area
        + 2.0 * params.alpha * reduce(c0, "integral")
        + params.alpha**2 * reduce(c0, "L2_squared")
    )

    reasons = []
    if float(np.min(c0.values)) < 1.0:
        reasons.append("initial concentration below 1")
    if params.K != 1.0:
        reasons.append(f"permeability K={params.K!r} is not 1")
    if not math.isclose(math.hypot(*params.g), 1.0):
        reasons.append(f"gravity {params.g!r} does not have unit magnitude")

    if reasons:
        logger.warning("Energy bound %.6g is not valid: %s", value, "; ".join(reasons))

    return EnergyBound(value=value, valid=not reasons, reasons=tuple(reasons))


def energy_bound_ratio(alpha_a: float, alpha_b: float) -> float:
    """
    Ratio of the energy bounds for two density contrasts

    Uses the bound coefficients ``alpha**2 + 6 alpha / 5 + 2 / 5`` of the
    layered initial condition with values 1 and 2.
    """

    def coefficient(alpha: float) -> float:
        return alpha**2 + 1.2 * alpha + 0.4

    return coefficient(alpha_b) / coefficient(alpha_a)


def poincare_constant(grid: StructuredGrid) -> float:
    """
    Poincare constant ``max(Lx, Ly) / pi`` of the rectangle
    """
    return max(grid.Lx, grid.Ly) / math.pi


def discrete_spectral_gap(grid: StructuredGrid) -> float:
    """
    Smallest non-zero eigenvalue of the cell-centred Neumann Laplacian

    ``min(4 / dx**2 sin(pi dx / (2 Lx))**2, 4 / dy**2 sin(pi dy / (2 Ly))**2)``.
    It tends to ``1 / poincare_constant(grid)**2`` from below as the grid
    is refined.
    """
    gaps = [
        4.0 / h**2 * math.sin(math.pi * h / (2.0 * length)) ** 2
        for h, length in ((grid.dx, grid.Lx), (grid.dy, grid.Ly))
    ]

    return min(gaps)


def mixing_step_exponent(dt: float, params: PhysicalParams, grid: StructuredGrid) -> float:
    """
    Decay exponent of the variance over one implicit diffusion step

    The step divides every mean-free mode by at least
    ``1 + D lambda_h dt / (1 + k)``, where ``lambda_h`` is
    :func:`discrete_spectral_gap`. Upwind advection with a discretely
    divergence-free velocity cannot increase the variance, so the variance
    after ``n`` steps is at most ``sigma0**2 exp(-sum of the exponents)``.

    Returns
    -------
        ``2 log(1 + D lambda_h dt / (1 + k))``
    """
    return 2.0 * math.log1p(params.D * discrete_spectral_gap(grid) * dt / params.retardation)


def _mixing_exponent(
    t: float, params: PhysicalParams, grid: StructuredGrid, variant: MixingBoundVariant
) -> float:
    constant = poincare_constant(grid)
    if variant == "dimensional":
        scale = constant**2
    elif variant in ("linear", "paper"):
        scale = constant
    else:
        raise ValueError(f"Unknown mixing bound variant: {variant!r}")  # noqa: TRY003

    return 2.0 * params.D * t / (scale * params.retardation)


def mixing_lower_bound(
    t: float,
    params: PhysicalParams,
    grid: StructuredGrid,
    variant: MixingBoundVariant = "dimensional",
) -> float:
    """
    Lower bound on the degree of mixing at time ``t``

    Parameters
    ----------
    t
        Time, non-negative
    params
        Model coefficients
    grid
        Grid, only the domain extents are used
    variant
        Power of the Poincare constant in the exponent

    Returns
    -------
        ``1 - exp(-2 D t / (M**q (1 + k)))``
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")  # noqa: TRY003

    return -math.expm1(-_mixing_exponent(t, params, grid, variant))


def variance_upper_bound(
    t: float,
    sigma0_sq: float,
    params: PhysicalParams,
    grid: StructuredGrid,
    variant: MixingBoundVariant = "dimensional",
) -> float:
    """
    Upper bound on the concentration variance at time ``t``
    """
    return sigma0_sq * math.exp(-_mixing_exponent(t, params, grid, variant))


def mixing_sensitivity(k_a: float, k_b: float) -> float:
    """
    Small-time ratio of the mixing lower bounds for two adsorption coefficients

    Returns
    -------
        ``(1 + k_b) / (1 + k_a)``
    """
    return (1.0 + k_b) / (1.0 + k_a)


def fit_decay_rate(
    times: Sequence[float] | NDArrayFloat,
    values: Sequence[float] | NDArrayFloat,
    window: tuple[float, float] | None = None,
) -> DecayFit:
    """
    Fit an exponential decay by least squares on ``log(values)``

    Parameters
    ----------
    times
        Sample times
    values
        Sampled values, strictly positive inside the window
    window
        Inclusive time window ``(t1, t2)``. Defaults to the last half of the
        samples, widened to the last :data:`MIN_FIT_SAMPLES` samples when the
        half holds fewer.

    Raises
    ------
    InsufficientSamplesError
        Fewer than three samples in the window
    NonPositiveValueError
        A value in the window is zero or negative

    Returns
    -------
        Fitted rate and fit quality
    """
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if t.shape != y.shape:
        raise ValueError(f"times and values differ in shape: {t.shape} != {y.shape}")  # noqa: TRY003

    if window is None:
        if t.size < MIN_FIT_SAMPLES:
            raise InsufficientSamplesError(int(t.size), MIN_FIT_SAMPLES)
        start = min(int(t.size * (1.0 - DEFAULT_FIT_FRACTION)), t.size - MIN_FIT_SAMPLES)
        window = (float(t[start]), float(t[-1]))

    t1, t2 = window
    if not t1 < t2:
        raise ValueError(f"Fit window must satisfy t1 < t2, got {window!r}")  # noqa: TRY003

    mask = (t >= t1) & (t <= t2)
    n_samples = int(mask.sum())
    if n_samples < MIN_FIT_SAMPLES:
        raise InsufficientSamplesError(n_samples, MIN_FIT_SAMPLES)

    t_fit = t[mask]
    y_fit = y[mask]
    minimum = float(y_fit.min())
    if minimum <= 0:
        raise NonPositiveValueError("Values to fit", minimum)

    log_y = np.log(y_fit)
    res = scipy.stats.linregress(t_fit, log_y)
    residual = float(np.sqrt(np.mean((log_y - (res.intercept + res.slope * t_fit)) ** 2)))

    return DecayFit(
        rate=float(-res.slope),
        intercept=float(res.intercept),
        window=(float(t1), float(t2)),
        residual=residual,
        n_samples=n_samples,
    )


def observable_values(series: TimeSeries, column: str, norm: DecayNorm) -> NDArrayFloat:
    """
    Values whose decay is fitted for a given norm

    The ``l2`` column holds the L2 norm itself, so it is squared when fitting
    the ``L2_squared`` observable.
    """
    values = series.column(column)
    if norm == "L2_squared" and column == "l2":
        return values**2

    return values

