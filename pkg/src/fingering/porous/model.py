"""
Physical parameters and constitutive laws

All quantities are dimensionless. Viscosity follows ``mu(c) = exp(R c)`` and
density follows ``rho(c) = 1 + alpha c``.
"""
from __future__ import annotations

from typing import TypeVar

import attrs
import numpy as np
import numpy.typing as npt
from attrs import field, frozen, validators

ArrayOrFloat = TypeVar("ArrayOrFloat", float, npt.NDArray[np.float64])


def _to_gravity(value: object) -> tuple[float, float]:
    components = tuple(float(v) for v in value)  # type: ignore[attr-defined]
    if len(components) != 2:  # noqa: PLR2004
        raise ValueError(f"gravity must have 2 components, got {components}")  # noqa: TRY003
    return components  # type: ignore[return-value]


def _finite(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not np.isfinite(value):
        raise ValueError(f"{attribute.name} must be finite, got {value!r}")  # noqa: TRY003


def _finite_components(
    instance: object, attribute: attrs.Attribute[tuple[float, float]], value: tuple[float, float]
) -> None:
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{attribute.name} must be finite, got {value!r}")  # noqa: TRY003


@frozen
class PhysicalParams:
    """
    Model coefficients

    Immutable, so a single instance can be shared by any number of workers.
    """

    K: float = field(default=1.0, converter=float, validator=[_finite, validators.gt(0)])
    """Permeability"""

    R: float = field(default=1.0, converter=float, validator=[_finite, validators.ge(0)])
    """Viscosity-contrast coefficient"""

    alpha: float = field(
        default=1.0, converter=float, validator=[_finite, validators.ge(0)]
    )
    """Density-contrast coefficient"""

    k: float = field(default=1.0, converter=float, validator=[_finite, validators.ge(0)])
    """Linear adsorption coefficient, the retardation factor is ``1 + k``"""

    kappa: float = field(
        default=0.0, converter=float, validator=[_finite, validators.ge(0)]
    )
    """First-order reaction rate, constant in space"""

    D: float = field(default=0.005, converter=float, validator=[_finite, validators.gt(0)])
    """Diffusion coefficient"""

    g: tuple[float, float] = field(
        default=(0.0, -1.0), converter=_to_gravity, validator=_finite_components
    )
    """
    Gravity vector

    The default points towards decreasing y so a denser fluid sitting in the
    upper half of the domain is unstable.
    """

    @property
    def retardation(self) -> float:
        """Retardation factor ``1 + k``"""
        return retardation(self)


def viscosity(c: ArrayOrFloat, params: PhysicalParams) -> ArrayOrFloat:
    """
    Concentration-dependent viscosity

    Parameters
    ----------
    c
        Concentration, scalar or array
    params
        Model coefficients

    Returns
    -------
        ``exp(R c)``, strictly positive
    """
    return np.exp(params.R * c)  # type: ignore[return-value]


def density(c: ArrayOrFloat, params: PhysicalParams) -> ArrayOrFloat:
    """
    Concentration-dependent density

    Parameters
    ----------
    c
        Concentration, scalar or array
    params
        Model coefficients

    Returns
    -------
        ``1 + alpha c``
    """
    return 1.0 + params.alpha * c  # type: ignore[return-value]


def mobility(c: ArrayOrFloat, params: PhysicalParams) -> ArrayOrFloat:
    """
    Mobility ``K / mu(c)``
    """
    return params.K * np.exp(-params.R * c)  # type: ignore[return-value]


def mobility_bounds(
    c_min: float, c_max: float, params: PhysicalParams
) -> tuple[float, float]:
    """
    Range of the mobility over concentrations in ``[c_min, c_max]``

    Parameters
    ----------
    c_min
        Smallest concentration
    c_max
        Largest concentration
    params
        Model coefficients

    Returns
    -------
        ``(K exp(-R c_max), K exp(-R c_min))``
    """
    return float(mobility(c_max, params)), float(mobility(c_min, params))


def retardation(params: PhysicalParams) -> float:
    """
    Retardation factor of the linear adsorption isotherm
    """
    return 1.0 + params.k
