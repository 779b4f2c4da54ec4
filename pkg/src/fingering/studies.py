"""
Parameter sweeps and mesh-convergence studies

Both run many independent simulations in a :mod:`joblib` worker pool. Each
simulation owns its output directory, and the coordinating process writes the
aggregate table once every run has finished.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import attrs
import numpy as np
import pandas as pd
import scipy.integrate
from attrs import field, frozen
from joblib import Parallel, delayed  # type: ignore

from fingering.config import RunConfig, validate_run_config, with_outputs
from fingering.exceptions import (
    ConfigValidationError,
    InsufficientSamplesError,
    InvariantViolationError,
    NonPositiveValueError,
    SimulationError,
)
from fingering.outputs import sinks_from_config
from fingering.porous.diagnostics import (
    TimeSeries,
    decay_envelope,
    energy_bound_ratio,
    fit_decay_rate,
    mixing_sensitivity,
    observable_values,
    theoretical_decay_rate,
    variance_upper_bound,
)
from fingering.porous.model import PhysicalParams
from fingering.porous.simulation import ENERGY_BOUND_RTOL, run

logger = logging.getLogger(__name__)

JOBS_ENV_VAR = "FINGERING_JOBS"

AXIS_ALIASES: Mapping[str, str] = {
    "alpha": "physics.alpha",
    "R": "physics.R",
    "k": "physics.k",
    "kappa": "physics.kappa",
    "D": "physics.D",
    "K": "physics.K",
    "seed": "initial_condition.seed",
    "nx": "grid.nx",
    "ny": "grid.ny",
}
"""Short names accepted for sweep axes"""

ENVELOPE_RTOL = 1e-8
"""Relative slack on the L1 decay envelope"""

ERROR_COLUMNS = ("energy_L2", "energy_Linf", "variance_L2", "variance_Linf")


def default_jobs() -> int:
    """
    Worker count from the ``FINGERING_JOBS`` environment variable, 1 if unset
    """
    raw = os.environ.get(JOBS_ENV_VAR)
    if not raw:
        return 1

    try:
        jobs = int(raw)
    except ValueError as exc:
        raise ValueError(f"{JOBS_ENV_VAR} must be an integer, got {raw!r}") from exc  # noqa: TRY003

    if jobs == 0:
        raise ValueError(f"{JOBS_ENV_VAR} must not be 0")  # noqa: TRY003

    return jobs


def resolve_axis(name: str) -> str:
    """
    Dotted configuration path of a sweep axis
    """
    return AXIS_ALIASES.get(name, name)


def override(config: RunConfig, axis: str, value: float) -> RunConfig:
    """
    Copy of ``config`` with one value replaced

    Parameters
    ----------
    config
        Run configuration
    axis
        Short axis name or dotted path such as ``physics.alpha``
    value
        New value, converted to ``int`` where the field holds an ``int``

    Raises
    ------
    ConfigValidationError
        Unknown path or the new value breaks a constraint

    Returns
    -------
        Validated configuration
    """
    path = resolve_axis(axis)

    def replace(obj: Any, parts: Sequence[str]) -> Any:
        head, *rest = parts
        if not attrs.has(type(obj)) or head not in attrs.fields_dict(type(obj)):
            raise ConfigValidationError([f"{path}: unknown configuration path"])

        current = getattr(obj, head)
        if rest:
            new = replace(current, rest)
        elif isinstance(current, int) and not isinstance(current, bool):
            if not float(value).is_integer():
                raise ConfigValidationError([f"{path}: expected an integer, got {value!r}"])
            new = int(value)
        else:
            new = value

        try:
            return attrs.evolve(obj, **{head: new})
        except (ValueError, TypeError) as exc:
            raise ConfigValidationError([f"{path}: {exc}"]) from exc

    updated: RunConfig = replace(config, path.split("."))
    validate_run_config(updated)

    return updated


def _format_value(value: float) -> str:
    # Labels must round-trip: 0.1000001 and 0.1000002 both print as 0.1 with :g
    short = f"{value:g}"
    return short if float(short) == value else repr(float(value))


@frozen
class SweepSpec:
    """
    Cartesian product of parameter values around a base run
    """

    base: RunConfig
    """Base run configuration"""

    axes: Mapping[str, Sequence[float]] = field()
    """Values per axis, see :data:`AXIS_ALIASES`"""

    jobs: int = 1
    """Maximum number of concurrent runs, ``-1`` uses every core"""

    report_time: float | None = None
    """Time at which the energy of each run is reported"""

    @axes.validator
    def _check_axes(
        self, attribute: attrs.Attribute[Any], value: Mapping[str, Sequence[float]]
    ) -> None:
        if not value:
            raise ValueError("a sweep needs at least one axis")  # noqa: TRY003
        empty = [name for name, values in value.items() if not values]
        if empty:
            raise ValueError(f"sweep axes without values: {empty}")  # noqa: TRY003
        paths = [resolve_axis(name) for name in value]
        repeated = sorted({path for path in paths if paths.count(path) > 1})
        if repeated:
            raise ValueError(  # noqa: TRY003
                f"sweep axes name the same parameter more than once: {repeated}"
            )

    @property
    def size(self) -> int:
        """Number of runs"""
        return math.prod(len(v) for v in self.axes.values())

    def cells(self) -> list[tuple[str, dict[str, float], RunConfig]]:
        """
        Every run of the sweep

        Returns
        -------
            Label, axis values and configuration of every run, in the order
            of the Cartesian product
        """
        names = list(self.axes)
        out = []
        for values in itertools.product(*(self.axes[name] for name in names)):
            config = self.base
            for name, value in zip(names, values):
                config = override(config, name, value)

            label = "_".join(f"{name}={_format_value(v)}" for name, v in zip(names, values))
            out.append((label, dict(zip(names, values)), attrs.evolve(config, name=label)))

        return out


def _fit_rate(series: TimeSeries, column: str, norm: Any) -> float:
    try:
        return fit_decay_rate(series.column("t"), observable_values(series, column, norm)).rate
    except (InsufficientSamplesError, NonPositiveValueError):
        return math.nan


def summarise_run(
    config: RunConfig,
    series: TimeSeries,
    energy_bound_value: float | None,
    report_time: float | None,
    base: PhysicalParams | None = None,
) -> dict[str, Any]:
    """
    Scalar summary of one finished run

    Parameters
    ----------
    config
        Configuration of the run
    series
        Sampled diagnostics
    energy_bound_value
        Kinetic energy bound, ``None`` if the bound does not apply
    report_time
        Time at which to interpolate the energy
    base
        Coefficients of the sweep's base run. If given, the row also holds
        the energy bound and small-time mixing ratios the theory predicts
        for this run relative to the base.

    Returns
    -------
        Summary row
    """
    t = series.column("t")
    energy = series.column("energy")
    l1 = series.column("l1")
    params = config.physics

    row: dict[str, Any] = {
        "final_time": float(t[-1]),
        "final_energy": float(energy[-1]),
        "final_mixing": float(series.column("mixing")[-1]),
        "max_energy": float(energy.max()),
        "energy_at_report_time": (
            float(np.interp(report_time, t, energy)) if report_time is not None else math.nan
        ),
        "energy_bound": energy_bound_value if energy_bound_value is not None else math.nan,
        "energy_bound_ok": (
            bool(np.all(energy <= energy_bound_value * (1 + ENERGY_BOUND_RTOL) + 1e-12))
            if energy_bound_value is not None
            else None
        ),
        "l1_envelope_ok": bool(
            np.all(l1 <= decay_envelope(t, params, float(l1[0])) * (1 + ENVELOPE_RTOL))
        ),
        "final_variance_bound": math.nan,
        "rate_L1": math.nan,
        "rate_L1_theory": theoretical_decay_rate(params, "L1"),
        "rate_L2_squared": math.nan,
        "rate_L2_squared_theory": theoretical_decay_rate(params, "L2_squared"),
    }
    if params.kappa > 0:
        row["rate_L1"] = _fit_rate(series, "l1", "L1")
        row["rate_L2_squared"] = _fit_rate(series, "l2", "L2_squared")
    else:
        row["final_variance_bound"] = variance_upper_bound(
            float(t[-1]), float(series.column("variance")[0]), params, config.grid.to_grid()
        )

    if base is not None:
        row["energy_bound_ratio_theory"] = energy_bound_ratio(base.alpha, params.alpha)
        row["mixing_ratio_theory"] = mixing_sensitivity(params.k, base.k)

    return row


def run_cell(
    label: str,
    values: dict[str, float],
    config: RunConfig,
    report_time: float | None,
    base: PhysicalParams | None = None,
) -> dict[str, Any]:
    """
    Run one sweep cell and summarise it

    Invariant violations and solver failures are caught and recorded in the
    row, so one failed run does not stop the sweep.

    Returns
    -------
        Summary row, ``status`` is ``"ok"`` or ``"failed"``
    """
    row: dict[str, Any] = {"run": label, **values}
    try:
        result = run(config, sinks_from_config(config.output))
    except InvariantViolationError as exc:
        logger.error("Run %r failed: %s", label, exc)  # noqa: TRY400
        return {
            **row,
            "status": "failed",
            "error": str(exc),
            "bounds_ok": exc.invariant != "bounds envelope",
        }
    except SimulationError as exc:
        logger.error("Run %r failed: %s", label, exc)  # noqa: TRY400
        return {**row, "status": "failed", "error": str(exc), "bounds_ok": None}

    bound = result.energy_bound.value if result.energy_bound.valid else None
    return {
        **row,
        "status": "ok",
        "error": "",
        "bounds_ok": True,
        **summarise_run(config, result.series, bound, report_time, base),
    }


def run_sweep(spec: SweepSpec, output_root: Path | None = None) -> pd.DataFrame:
    """
    Run every cell of a sweep

    Parameters
    ----------
    spec
        Sweep description
    output_root
        If given, run ``<label>`` writes into
        ``<output_root>/<base name>/<label>/`` and the summary is written to
        ``<output_root>/<base name>/summary.csv``

    Returns
    -------
        Summary with one row per run. Failed runs have ``status == "failed"``.
    """
    cells = spec.cells()
    sweep_dir = output_root / spec.base.name if output_root is not None else None
    if sweep_dir is not None:
        cells = [
            (label, values, with_outputs(config, sweep_dir / label))
            for label, values, config in cells
        ]

    logger.info(
        "Sweep %r: %d runs over %s with %d job(s)",
        spec.base.name,
        len(cells),
        ", ".join(spec.axes),
        spec.jobs,
    )

    rows = Parallel(n_jobs=spec.jobs)(
        delayed(run_cell)(label, values, config, spec.report_time, spec.base.physics)
        for label, values, config in cells
    )
    summary = pd.DataFrame(rows)

    n_failed = int((summary["status"] != "ok").sum())
    if n_failed:
        logger.warning("Sweep %r: %d of %d runs failed", spec.base.name, n_failed, len(cells))

    if sweep_dir is not None:
        sweep_dir.mkdir(parents=True, exist_ok=True)
        summary.to_csv(sweep_dir / "summary.csv", index=False, lineterminator="\n", na_rep="")
        logger.info("Wrote sweep summary to %s", sweep_dir / "summary.csv")

    return summary


def _check_mesh(mesh: tuple[int, int], what: str) -> None:
    nx, ny = mesh
    if nx < 2 or ny < 2:  # noqa: PLR2004
        raise ValueError(f"{what} {mesh} needs at least 2 cells per direction")  # noqa: TRY003


@frozen
class ConvergenceSpec:
    """
    Mesh ladder and reference mesh around a base run
    """

    base: RunConfig
    """Base run configuration, its grid resolution is replaced"""

    meshes: tuple[tuple[int, int], ...] = field(converter=lambda v: tuple(tuple(m) for m in v))
    """Ladder of ``(nx, ny)``, coarse to fine"""

    reference: tuple[int, int] = field(converter=tuple)
    """Reference mesh, at least as fine as every ladder mesh in both directions"""

    jobs: int = 1
    """Maximum number of concurrent runs"""

    def __attrs_post_init__(self) -> None:
        """
        Check the ladder
        """
        if not self.meshes:
            raise ValueError("the mesh ladder is empty")  # noqa: TRY003

        for mesh in self.meshes:
            _check_mesh(mesh, "mesh")
        _check_mesh(self.reference, "reference mesh")

        for coarse, fine in zip(self.meshes[:-1], self.meshes[1:]):
            if not (fine[0] >= coarse[0] and fine[1] >= coarse[1] and fine != coarse):
                raise ValueError(  # noqa: TRY003
                    f"mesh ladder must go from coarse to fine, got {coarse} before {fine}"
                )

        for mesh in self.meshes:
            if mesh[0] > self.reference[0] or mesh[1] > self.reference[1]:
                raise ValueError(  # noqa: TRY003
                    f"reference mesh {self.reference} is coarser than ladder mesh {mesh}"
                )

    def config_for(self, mesh: tuple[int, int]) -> RunConfig:
        """
        Base configuration on the given mesh
        """
        nx, ny = mesh
        config = override(override(self.base, "nx", nx), "ny", ny)
        return attrs.evolve(config, name=f"{self.base.name}_{nx}x{ny}")


@frozen
class ConvergenceTable:
    """
    Errors of every ladder mesh against the reference
    """

    frame: pd.DataFrame
    """
    One row per ladder mesh: ``nx``, ``ny``, ``h``, the error columns of
    :data:`ERROR_COLUMNS` and an ``order_<column>`` per error column
    """

    monotone: bool
    """Whether every error column decreases strictly from coarse to fine"""


def time_series_error(
    t: Sequence[float] | np.ndarray,
    values: Sequence[float] | np.ndarray,
    t_ref: Sequence[float] | np.ndarray,
    values_ref: Sequence[float] | np.ndarray,
    relative: bool = False,
) -> tuple[float, float]:
    """
    L2 and max-norm distance between two sampled time series

    ``values`` is interpolated linearly onto the reference sample times. The
    L2 norm integrates over time with the trapezoidal rule.

    Parameters
    ----------
    t, values
        Series to compare
    t_ref, values_ref
        Reference series
    relative
        Divide each norm by the same norm of the reference (when non-zero)

    Returns
    -------
        L2 error and max-norm error
    """
    t_ref = np.asarray(t_ref, dtype=np.float64)
    values_ref = np.asarray(values_ref, dtype=np.float64)
    diff = np.interp(t_ref, np.asarray(t, dtype=np.float64), np.asarray(values, dtype=np.float64))
    diff = diff - values_ref

    def l2(v: np.ndarray) -> float:
        if v.size < 2:  # noqa: PLR2004
            return float(np.abs(v).max(initial=0.0))
        return float(np.sqrt(scipy.integrate.trapezoid(v * v, t_ref)))

    err_l2 = l2(diff)
    err_inf = float(np.abs(diff).max(initial=0.0))
    if relative:
        ref_l2 = l2(values_ref)
        ref_inf = float(np.abs(values_ref).max(initial=0.0))
        err_l2 = err_l2 / ref_l2 if ref_l2 > 0 else err_l2
        err_inf = err_inf / ref_inf if ref_inf > 0 else err_inf

    return err_l2, err_inf


def observed_orders(h: Sequence[float], errors: Sequence[float]) -> list[float]:
    """
    Observed convergence order between consecutive meshes

    ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``, NaN for the first mesh and
    wherever an error is zero.
    """
    orders = [math.nan]
    for (h0, e0), (h1, e1) in zip(zip(h[:-1], errors[:-1]), zip(h[1:], errors[1:])):
        if e0 > 0 and e1 > 0 and h0 != h1:
            orders.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            orders.append(math.nan)

    return orders


def _run_series(config: RunConfig) -> TimeSeries:
    return run(config, sinks_from_config(config.output)).series


def run_convergence(spec: ConvergenceSpec, output_root: Path | None = None) -> ConvergenceTable:
    """
    Run a mesh-convergence study

    Energy errors are absolute and variance errors relative, both in L2 and
    max-norm over the sampled time series.

    Parameters
    ----------
    spec
        Ladder and reference
    output_root
        If given, each run writes into
        ``<output_root>/<base name>/<nx>x<ny>/`` and the table is written to
        ``<output_root>/<base name>/convergence.csv``

    Raises
    ------
    SimulationError, InvariantViolationError
        A run failed

    Returns
    -------
        Error table and monotonicity flag
    """
    meshes = [*spec.meshes, spec.reference]
    configs = [spec.config_for(mesh) for mesh in meshes]
    study_dir = output_root / spec.base.name if output_root is not None else None
    if study_dir is not None:
        configs = [
            with_outputs(config, study_dir / f"{config.grid.nx}x{config.grid.ny}")
            for config in configs
        ]

    logger.info(
        "Convergence study %r: ladder %s against %s with %d job(s)",
        spec.base.name,
        list(spec.meshes),
        spec.reference,
        spec.jobs,
    )
    all_series = Parallel(n_jobs=spec.jobs)(delayed(_run_series)(config) for config in configs)
    reference = all_series[-1]
    t_ref = reference.column("t")

    rows = []
    for config, series in zip(configs[:-1], all_series[:-1]):
        t = series.column("t")
        energy_l2, energy_inf = time_series_error(
            t, series.column("energy"), t_ref, reference.column("energy")
        )
        variance_l2, variance_inf = time_series_error(
            t, series.column("variance"), t_ref, reference.column("variance"), relative=True
        )
        grid = config.grid.to_grid()
        rows.append(
            {
                "nx": grid.nx,
                "ny": grid.ny,
                "h": max(grid.dx, grid.dy),
                "energy_L2": energy_l2,
                "energy_Linf": energy_inf,
                "variance_L2": variance_l2,
                "variance_Linf": variance_inf,
            }
        )

    frame = pd.DataFrame(rows)
    monotone = True
    for column in ERROR_COLUMNS:
        frame[f"order_{column}"] = observed_orders(list(frame["h"]), list(frame[column]))
        errors = frame[column].to_numpy()
        if np.any(np.diff(errors) >= 0):
            monotone = False
            logger.warning(
                "Convergence study %r: %s does not decrease with h: %s",
                spec.base.name,
                column,
                errors.tolist(),
            )

    logger.info("Convergence table for %r:\n%s", spec.base.name, frame.to_string(index=False))

    if study_dir is not None:
        study_dir.mkdir(parents=True, exist_ok=True)
        frame.to_csv(study_dir / "convergence.csv", index=False, lineterminator="\n")

    return ConvergenceTable(frame=frame, monotone=monotone)
