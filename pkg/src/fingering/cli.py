"""
Command-line interface

The worker count of ``sweep`` and ``converge`` defaults to the
``FINGERING_JOBS`` environment variable, which may also be set in a ``.env``
file.
"""
from __future__ import annotations

import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import click
from dotenv import load_dotenv

import fingering
from fingering.config import RunConfig, load_run_config, with_outputs, with_seed
from fingering.exceptions import (
    ConfigParseError,
    ConfigValidationError,
    InsufficientSamplesError,
    InvariantViolationError,
    NonPositiveValueError,
    SimulationError,
)
from fingering.outputs import read_timeseries, sinks_from_config
from fingering.porous.diagnostics import (
    TIMESERIES_COLUMNS,
    fit_decay_rate,
    observable_values,
    theoretical_decay_rate,
)
from fingering.porous.model import PhysicalParams
from fingering.porous.simulation import run
from fingering.studies import (
    ConvergenceSpec,
    SweepSpec,
    default_jobs,
    resolve_axis,
    run_convergence,
    run_sweep,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = (
    "%(levelname)s - %(asctime)s %(name)s %(processName)s "
    "(%(module)s:%(funcName)s:%(lineno)d):  %(message)s"
)
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(verbose: bool) -> None:
    """
    Configure the root logger

    Parameters
    ----------
    verbose
        Log at DEBUG level instead of INFO
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    for existing in root_logger.handlers:
        if getattr(existing, "_fingering", False):
            # Repeated in-process invocations may have swapped stderr
            existing.setStream(sys.stderr)  # type: ignore[attr-defined]
            return

    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    handler._fingering = True  # type: ignore[attr-defined]
    root_logger.addHandler(handler)


def _load(config_file: Path, seed: int | None, output_dir: Path | None) -> RunConfig:
    try:
        config = load_run_config(config_file)
    except (ConfigParseError, ConfigValidationError) as exc:
        raise click.ClickException(f"{config_file}: {exc}") from exc

    return with_outputs(with_seed(config, seed), output_dir)


def parse_axis(raw: str) -> tuple[str, list[float]]:
    """
    Parse a ``name=v1,v2,...`` sweep axis
    """
    name, sep, values = raw.partition("=")
    if not sep or not name or not values:
        raise click.BadParameter(f"expected name=v1,v2,..., got {raw!r}")
    try:
        return name.strip(), [float(v) for v in values.split(",")]
    except ValueError as exc:
        raise click.BadParameter(f"non-numeric value in {raw!r}") from exc


def parse_mesh(raw: str) -> tuple[int, int]:
    """
    Parse an ``NXxNY`` mesh
    """
    try:
        nx, ny = (int(v) for v in raw.lower().split("x"))
    except ValueError as exc:
        raise click.BadParameter(f"expected NXxNY, got {raw!r}") from exc
    return nx, ny


def parse_window(raw: str | None) -> tuple[float, float] | None:
    """
    Parse a ``t1:t2`` fit window
    """
    if raw is None:
        return None
    try:
        t1, t2 = (float(v) for v in raw.split(":"))
    except ValueError as exc:
        raise click.BadParameter(f"expected t1:t2, got {raw!r}") from exc
    return t1, t2


config_argument = click.argument(
    "config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
seed_option = click.option("--seed", type=int, default=None, help="Override the perturbation seed")
jobs_option = click.option(
    "--jobs",
    type=int,
    default=None,
    help="Concurrent runs, defaults to FINGERING_JOBS or 1 (-1 uses every core)",
)


@click.group()
@click.version_option(fingering.__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level")
def cli(verbose: bool) -> None:
    """
    Simulate density- and viscosity-driven fingering with adsorption and reaction
    """
    load_dotenv()
    setup_logging(verbose)


@cli.command("run")
@config_argument
@seed_option
@click.option(
    "--output-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Write timeseries.csv (and snapshots) into this directory",
)
def run_command(config_file: Path, seed: int | None, output_dir: Path | None) -> None:
    """
    Run a single simulation described by CONFIG_FILE
    """
    config = _load(config_file, seed, output_dir)

    try:
        result = run(config, sinks_from_config(config.output))
    except (InvariantViolationError, SimulationError) as exc:
        raise click.ClickException(str(exc)) from exc

    state = result.state
    click.echo(
        f"{config.name}: t={state.t:g} steps={state.step_count} "
        f"energy={result.series.energy[-1]:.6g} "
        f"pressure_iterations={state.pressure_iterations}"
    )


@cli.command("sweep")
@config_argument
@click.option(
    "--axis",
    "axes",
    multiple=True,
    required=True,
    help="Sweep axis as name=v1,v2,... (alpha, R, k, kappa, D, K, seed, nx, ny or a dotted path)",
)
@click.option("--report-time", type=float, default=None, help="Report the energy at this time")
@click.option(
    "--output-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("output"),
    show_default=True,
    help="Root of the per-run output directories",
)
@seed_option
@jobs_option
def sweep_command(  # noqa: PLR0913
    config_file: Path,
    axes: Sequence[str],
    report_time: float | None,
    output_dir: Path,
    seed: int | None,
    jobs: int | None,
) -> None:
    """
    Run CONFIG_FILE over the Cartesian product of the given axes

    Exits with a non-zero status if any run failed.
    """
    config = _load(config_file, seed, None)
    parsed: dict[str, list[float]] = {}
    for raw in axes:
        name, values = parse_axis(raw)
        if resolve_axis(name) in {resolve_axis(n) for n in parsed}:
            raise click.BadParameter(f"axis {name!r} given more than once", param_hint="'--axis'")
        parsed[name] = values

    try:
        spec = SweepSpec(
            base=config,
            axes=parsed,
            jobs=jobs if jobs is not None else default_jobs(),
            report_time=report_time,
        )
        summary = run_sweep(spec, output_dir)
    except (ValueError, ConfigValidationError) as exc:
        raise click.ClickException(str(exc)) from exc

    click.echo(summary.to_string(index=False))

    failed = summary[summary["status"] != "ok"]
    if not failed.empty:
        raise click.ClickException(f"{len(failed)} of {len(summary)} runs failed")


@cli.command("converge")
@config_argument
@click.option(
    "--meshes", required=True, help="Comma-separated ladder, coarse to fine, e.g. 24x48,48x96"
)
@click.option("--reference", required=True, help="Reference mesh, e.g. 192x384")
@click.option(
    "--output-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Write every run and convergence.csv below this directory",
)
@seed_option
@jobs_option
def converge_command(  # noqa: PLR0913
    config_file: Path,
    meshes: str,
    reference: str,
    output_dir: Path | None,
    seed: int | None,
    jobs: int | None,
) -> None:
    """
    Mesh-convergence study of the energy and variance of CONFIG_FILE

    Exits with a non-zero status if the errors do not decrease with h.
    """
    config = _load(config_file, seed, None)

    try:
        spec = ConvergenceSpec(
            base=config,
            meshes=[parse_mesh(m) for m in meshes.split(",")],
            reference=parse_mesh(reference),
            jobs=jobs if jobs is not None else default_jobs(),
        )
        table = run_convergence(spec, output_dir)
    except (ValueError, ConfigValidationError, InvariantViolationError, SimulationError) as exc:
        raise click.ClickException(str(exc)) from exc

    click.echo(table.frame.to_string(index=False))

    if not table.monotone:
        raise click.ClickException("errors do not decrease monotonically with h")


@cli.command("fitdecay")
@click.argument("csv_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--column",
    type=click.Choice([c for c in TIMESERIES_COLUMNS if c != "t"]),
    default="l1",
    show_default=True,
    help="Column to fit",
)
@click.option("--window", default=None, help="Fit window t1:t2, defaults to the last half of the samples")
@click.option(
    "--norm",
    type=click.Choice(["L1", "Lp", "L2_squared"]),
    default="L1",
    show_default=True,
    help="Observable convention, L2_squared squares the l2 column",
)
@click.option("--kappa", type=float, default=None, help="Reaction rate, to report the theoretical rate")
@click.option("--k", "k", type=float, default=0.0, show_default=True, help="Adsorption coefficient")
def fitdecay_command(  # noqa: PLR0913
    csv_file: Path,
    column: str,
    window: str | None,
    norm: str,
    kappa: float | None,
    k: float,
) -> None:
    """
    Fit an exponential decay rate to a column of a time series CSV
    """
    try:
        series = read_timeseries(csv_file)
        fit = fit_decay_rate(
            series.column("t"),
            observable_values(series, column, norm),  # type: ignore[arg-type]
            parse_window(window),
        )
    except (ValueError, InsufficientSamplesError, NonPositiveValueError) as exc:
        raise click.ClickException(str(exc)) from exc

    click.echo(
        f"rate={fit.rate:.10g} intercept={fit.intercept:.10g} "
        f"window={fit.window[0]:g}:{fit.window[1]:g} samples={fit.n_samples} "
        f"residual={fit.residual:.3e}"
    )

    if kappa is not None:
        params = PhysicalParams(kappa=kappa, k=k)
        expected = theoretical_decay_rate(params, norm)  # type: ignore[arg-type]
        click.echo(f"theoretical_rate={expected:.10g} difference={fit.rate - expected:.3e}")
