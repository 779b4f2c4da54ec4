"""
Configuration

Every run is described by a :class:`RunConfig`. Studies (parameter sweeps and
mesh-convergence studies) wrap a base run configuration and are described by
:class:`StudyConfig`. Both are read from YAML.
"""
from __future__ import annotations

import logging
from collections.abc import Iterable
from pathlib import Path
from typing import Any, Literal

import attrs
import cattrs
from attrs import define, field, frozen, validators

from fingering.exceptions import ConfigParseError, ConfigValidationError
from fingering.porous.grid import StructuredGrid
from fingering.porous.model import PhysicalParams
from fingering.porous.transport import (
    AdvectionScheme,
    InitialCondition,
    ReactionTreatment,
)
from fingering.serialization import (
    FrozenDict,
    converter_yaml,
    dump_yaml,
    load_yaml,
    parse_placeholders,
)
from fingering.workflow.fragments import ConfigFragment, layer_fragments, read_fragment

logger = logging.getLogger(__name__)


def _open_unit_interval(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not 0 < value < 1:
        raise ValueError(f"{attribute.name} must be in (0, 1), got {value!r}")  # noqa: TRY003


@frozen
class GridConfig:
    """
    Domain extents and resolution
    """

    Lx: float = field(default=100.0, converter=float, validator=validators.gt(0))
    """Domain extent along x"""

    Ly: float = field(default=200.0, converter=float, validator=validators.gt(0))
    """Domain extent along y"""

    nx: int = field(default=96, validator=[validators.instance_of(int), validators.ge(2)])
    """Number of cells along x"""

    ny: int = field(default=192, validator=[validators.instance_of(int), validators.ge(2)])
    """Number of cells along y"""

    def to_grid(self) -> StructuredGrid:
        """
        Build the grid
        """
        return StructuredGrid(Lx=self.Lx, Ly=self.Ly, nx=self.nx, ny=self.ny)


@frozen
class TimeConfig:
    """
    Time horizon and step control
    """

    t_end: float = field(default=150.0, converter=float, validator=validators.gt(0))
    """Final time"""

    sample_interval: float = field(default=1.0, converter=float, validator=validators.gt(0))
    """Simulated time between two diagnostic samples"""

    dt_max: float = field(default=1.0, converter=float, validator=validators.gt(0))
    """Largest time step, used when the flow is at rest"""

    safety: float = field(
        default=0.5, converter=float, validator=[validators.gt(0), validators.le(1)]
    )
    """Fraction of the advective stability limit used as time step"""


@frozen
class SolverConfig:
    """
    Linear solvers and discretisation options
    """

    pressure_tol: float = field(default=1e-10, converter=float, validator=_open_unit_interval)
    """Relative residual target of the pressure solve"""

    transport_tol: float = field(default=1e-12, converter=float, validator=_open_unit_interval)
    """Relative residual target of the implicit transport solve"""

    preconditioner: Literal["jacobi", "multigrid"] = field(
        default="jacobi", validator=validators.in_(("jacobi", "multigrid"))
    )
    """Preconditioner of the pressure solve"""

    pressure_resolve_interval: int = field(
        default=1, validator=[validators.instance_of(int), validators.ge(1)]
    )
    """
    Number of transport steps between pressure solves

    The pressure is always re-solved at sample times.
    """

    advection: AdvectionScheme = field(
        default="upwind", validator=validators.in_(("upwind", "minmod"))
    )
    """Advective face reconstruction"""

    reaction: ReactionTreatment = field(
        default="exponential", validator=validators.in_(("exponential", "implicit_euler"))
    )
    """Treatment of the reaction term"""


@frozen
class OutputConfig:
    """
    Files written by a run
    """

    timeseries: Path | None = None
    """CSV file receiving the diagnostics time series"""

    snapshot_dir: Path | None = None
    """Directory receiving concentration snapshots"""

    snapshot_every: int = field(default=0, validator=[validators.instance_of(int), validators.ge(0)])
    """Write a snapshot every this many samples, 0 disables snapshots"""

    gzip_snapshots: bool = False
    """Compress snapshots with gzip"""


@frozen
class RunConfig:
    """
    Complete description of a single simulation

    The defaults are the reference layered run: a 100 x 200 domain on a
    96 x 192 grid, ``alpha = R = k = 1``, no reaction and ``D = 0.005``.
    """

    name: str = "default"
    """Name of the run, used in output paths"""

    grid: GridConfig = field(factory=GridConfig)
    physics: PhysicalParams = field(factory=PhysicalParams)
    initial_condition: InitialCondition = field(factory=InitialCondition)
    time: TimeConfig = field(factory=TimeConfig)
    solver: SolverConfig = field(factory=SolverConfig)
    output: OutputConfig = field(factory=OutputConfig)


def _field_violations(instance: Any, path: str) -> Iterable[str]:
    for attribute in attrs.fields(type(instance)):
        value = getattr(instance, attribute.name)
        location = f"{path}.{attribute.name}" if path else attribute.name

        if attribute.validator is not None:
            try:
                attribute.validator(instance, attribute, value)
            except (ValueError, TypeError) as exc:
                yield f"{location}: {_describe(exc)}"

        if attrs.has(type(value)):
            yield from _field_violations(value, location)


def _describe(exc: Exception) -> str:
    # attrs' instance_of raises TypeError with a 4-tuple of arguments
    if isinstance(exc, TypeError) and len(exc.args) > 1:
        return str(exc.args[0])
    return str(exc)


def _cross_field_violations(config: RunConfig) -> Iterable[str]:
    ic = config.initial_condition
    if ic.profile in ("step", "smooth") and not 0 < ic.interface_y < config.grid.Ly:
        yield (
            f"initial_condition.interface_y: must lie in (0, {config.grid.Ly!r}), "
            f"got {ic.interface_y!r}"
        )

    if config.time.sample_interval > config.time.t_end:
        yield (
            f"time.sample_interval: {config.time.sample_interval!r} exceeds "
            f"time.t_end {config.time.t_end!r}"
        )


def validate_run_config(config: RunConfig) -> None:
    """
    Check every constraint on a run configuration

    All violations are collected before raising.

    Raises
    ------
    ConfigValidationError
        At least one constraint is violated
    """
    violations = [*_field_violations(config, ""), *_cross_field_violations(config)]
    if violations:
        raise ConfigValidationError(violations)


def structure_run_config(data: ConfigFragment | None) -> RunConfig:
    """
    Build a validated :class:`RunConfig` from parsed YAML

    Parameters
    ----------
    data
        Parsed document, ``None`` for an empty document

    Raises
    ------
    ConfigValidationError
        Unknown keys, wrong types or violated constraints

    Returns
    -------
        Validated configuration
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigValidationError([f"expected a mapping at the top level, got {type(data).__name__}"])

    with attrs.validators.disabled():
        try:
            config = converter_yaml.structure(data, RunConfig)
        except (cattrs.BaseValidationError, cattrs.ForbiddenExtraKeysError) as exc:
            raise ConfigValidationError(cattrs.transform_error(exc)) from exc
        except (ValueError, TypeError) as exc:
            raise ConfigValidationError([str(exc)]) from exc

    validate_run_config(config)

    return config


def parse_config(text: str) -> RunConfig:
    """
    Parse a run configuration document

    Missing keys take their defaults, so an empty document gives the
    reference run.

    Parameters
    ----------
    text
        YAML document

    Raises
    ------
    ConfigParseError
        Invalid YAML or a duplicate key
    ConfigValidationError
        Unknown keys, wrong types or violated constraints, all listed

    Returns
    -------
        Validated configuration
    """
    return structure_run_config(load_yaml(text))


def load_run_config(path: Path) -> RunConfig:
    """
    Load a run configuration from disk
    """
    with open(path) as fh:
        return parse_config(fh.read())


def with_seed(config: RunConfig, seed: int | None) -> RunConfig:
    """
    Override the seed of the initial perturbation

    Parameters
    ----------
    config
        Run configuration
    seed
        New seed, ``None`` keeps the configured one
    """
    if seed is None:
        return config

    return attrs.evolve(
        config, initial_condition=attrs.evolve(config.initial_condition, seed=seed)
    )


def with_outputs(config: RunConfig, output_dir: Path | None) -> RunConfig:
    """
    Point all outputs of a run into a directory

    The time series goes to ``timeseries.csv`` and snapshots into
    ``snapshots/``.
    """
    if output_dir is None:
        return config

    output = attrs.evolve(
        config.output,
        timeseries=output_dir / "timeseries.csv",
        snapshot_dir=output_dir / "snapshots" if config.output.snapshot_every > 0 else None,
    )
    return attrs.evolve(config, output=output)


def write_run_config(config: RunConfig, path: Path) -> None:
    """
    Write a run configuration as YAML
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dump_yaml(config))


@frozen
class SweepConfig:
    """
    Cartesian parameter sweep around the base run
    """

    axes: FrozenDict[str, list[float]]
    """
    Values per parameter

    Keys are short names (``alpha``, ``R``, ``k``, ``kappa``, ``D``, ``K``,
    ``seed``, ``nx``, ``ny``) or dotted paths such as ``physics.alpha``.
    """

    report_time: float | None = None
    """Time at which the energy of every run is reported in the summary"""


@frozen
class ConvergenceConfig:
    """
    Mesh-convergence study around the base run
    """

    meshes: list[tuple[int, int]]
    """Mesh ladder ``(nx, ny)``, coarse to fine"""

    reference: tuple[int, int]
    """Reference mesh, at least as fine as every ladder entry"""


@frozen
class StudyConfig:
    """
    A study: one base run plus an optional sweep or convergence ladder
    """

    name: str
    """Name of the study"""

    output_dir: Path
    """Directory receiving every output of the study"""

    run: FrozenDict[str, Any] = field(factory=FrozenDict)
    """Base run configuration fragment, see :class:`RunConfig`"""

    sweep: SweepConfig | None = None
    convergence: ConvergenceConfig | None = None

    def base_run(self) -> RunConfig:
        """
        Validated base run configuration
        """
        return structure_run_config(_thaw(self.run))


def _thaw(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _thaw(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_thaw(v) for v in value]
    return value


@define
class ConfigBundle:
    """
    Configuration bundle

    Useful to have everything in one place once we have finished hydrating
    config, setting paths etc.
    """

    raw_config_file: Path
    """Path to raw configuration on which this bundle is based"""

    config_hydrated: StudyConfig
    """Hydrated config"""

    config_hydrated_path: Path
    """Path in/from which to read/write ``config_hydrated``"""

    output_root_dir: Path
    """Root output directory"""

    run_id: str
    """ID for the run"""

    stub: str
    """Stub to identify this particular study, separate from all others"""


def load_study_config(config: str) -> StudyConfig:
    """
    Load a study configuration from a string

    Raises
    ------
    ConfigParseError
        Invalid YAML or a duplicate key
    ConfigValidationError
        Unknown keys or wrong types
    """
    data = load_yaml(config)
    try:
        study = converter_yaml.structure(data, StudyConfig)
    except (cattrs.BaseValidationError, cattrs.ForbiddenExtraKeysError) as exc:
        raise ConfigValidationError(cattrs.transform_error(exc)) from exc

    # Fail early on a broken base run
    study.base_run()

    return study


def get_config_bundle(
    raw_config_file: Path,
    output_root_dir: Path,
    run_id: str,
    common_config_file: Path,
) -> ConfigBundle:
    """
    Get config bundle from a study config file

    The study configuration is deep-merged on top of the common configuration
    (the study wins in case of conflict). Placeholders are then filled in:
    ``{output_root_dir}``, ``{run_id}``, ``{stub}`` and any top-level string
    values of the merged configuration.

    Parameters
    ----------
    raw_config_file
        Study configuration file
    output_root_dir
        Root directory for outputs
    run_id
        ID to use for the outputs
    common_config_file
        YAML file containing configuration shared by every study

    Raises
    ------
    ConfigParseError
        A placeholder could not be filled

    Returns
    -------
        Configuration bundle
    """
    output_root_dir = output_root_dir.absolute()
    stub = raw_config_file.stem

    placeholders = dict(output_root_dir=output_root_dir, run_id=run_id, stub=stub)

    merged = layer_fragments(read_fragment(common_config_file), read_fragment(raw_config_file))

    # Top-level strings may be used as placeholders, but cannot contain any themselves
    study_placeholders = {
        key: value
        for key, value in merged.items()
        if isinstance(value, str) and "{" not in value and "}" not in value
    }

    try:
        hydrated = parse_placeholders(
            dump_yaml(merged), **study_placeholders, **placeholders
        )
    except KeyError as exc:
        raise ConfigParseError(f"unknown placeholder {exc.args[0]!r} in {raw_config_file}") from exc

    config_hydrated = load_study_config(hydrated)

    config_hydrated_path = get_run_root_dir(output_root_dir, run_id) / stub / raw_config_file.name
    config_hydrated_path.parent.mkdir(parents=True, exist_ok=True)

    return ConfigBundle(
        raw_config_file=raw_config_file,
        config_hydrated=config_hydrated,
        config_hydrated_path=config_hydrated_path,
        output_root_dir=output_root_dir,
        run_id=run_id,
        stub=stub,
    )


def get_run_root_dir(output_root_dir: Path, run_id: str) -> Path:
    """
    Get root directory for run

    Parameters
    ----------
    output_root_dir
        Output root directory

    run_id
        Run ID

    Returns
    -------
        Root directory for output from this run
    """
    return output_root_dir.absolute() / run_id


def write_config_file_in_output_dir(cb: ConfigBundle) -> None:
    """
    Write the hydrated study configuration into the output bundle

    Parameters
    ----------
    cb
        Config bundle
    """
    with open(cb.config_hydrated_path, "w") as fh:
        fh.write(dump_yaml(cb.config_hydrated))
