"""
Generation of doit tasks for studies

A study with a sweep gives one task per sweep cell plus a task collecting
the summary. A study with a convergence ladder gives one task running the
whole ladder. Every study finishes with a checklist of its outputs.
"""
from __future__ import annotations

import functools
import logging
from collections.abc import Callable, Iterable
from pathlib import Path
from typing import Any, TypeVar

import pandas as pd
from doit.tools import config_changed  # type: ignore

from fingering.config import ConfigBundle, RunConfig, StudyConfig, with_outputs
from fingering.porous.model import PhysicalParams
from fingering.serialization import dump_yaml
from fingering.studies import ConvergenceSpec, SweepSpec, run_cell, run_convergence
from fingering.workflow.checklist import checklist_path, write_checklist

logger = logging.getLogger(__name__)

CELL_SUMMARY_FNAME = "cell.csv"
SUMMARY_FNAME = "summary.csv"
CONVERGENCE_FNAME = "convergence.csv"

T = TypeVar("T")


def swallow_output(func: Callable[..., T]) -> Callable[..., None]:
    """
    Wrap ``func`` so it returns ``None``

    doit treats a python-action returning anything other than ``None``, a
    bool, a dict or a string as a failure, which rules out the ``Path``
    returned by :func:`write_checklist` or :func:`shutil.copytree`.
    """

    @functools.wraps(func)
    def out(*args: Any, **kwargs: Any) -> None:
        func(*args, **kwargs)

    return out


def sweep_spec(study: StudyConfig) -> SweepSpec | None:
    """
    Sweep of a study, ``None`` if it has none
    """
    if study.sweep is None:
        return None

    return SweepSpec(
        base=study.base_run(),
        axes={name: list(values) for name, values in study.sweep.axes.items()},
        report_time=study.sweep.report_time,
    )


def convergence_spec(study: StudyConfig) -> ConvergenceSpec | None:
    """
    Convergence study of a study, ``None`` if it has none
    """
    if study.convergence is None:
        return None

    return ConvergenceSpec(
        base=study.base_run(),
        meshes=study.convergence.meshes,
        reference=study.convergence.reference,
    )


def run_sweep_cell(
    label: str,
    values: dict[str, float],
    config: RunConfig,
    report_time: float | None,
    cell_summary: Path,
    base: PhysicalParams | None = None,
) -> None:
    """
    Run one sweep cell and write its one-row summary

    A failed run still writes its summary, with ``status`` set to ``failed``.
    """
    row = run_cell(label, values, config, report_time, base)
    cell_summary.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([row]).to_csv(cell_summary, index=False, lineterminator="\n", na_rep="")


def collect_sweep_summary(cell_summaries: Iterable[Path], summary: Path) -> None:
    """
    Concatenate the cell summaries of a sweep
    """
    frame = pd.concat([pd.read_csv(p) for p in cell_summaries], ignore_index=True)
    frame.to_csv(summary, index=False, lineterminator="\n", na_rep="")

    n_failed = int((frame["status"] != "ok").sum())
    if n_failed:
        logger.warning("%d of %d sweep runs failed, see %s", n_failed, len(frame), summary)


def gen_sweep_tasks(cb: ConfigBundle, spec: SweepSpec) -> Iterable[dict[str, Any]]:
    """
    Get tasks running every cell of a sweep and collecting the summary

    Parameters
    ----------
    cb
        Config bundle of the study
    spec
        Sweep of the study

    Returns
    -------
        pydoit tasks
    """
    sweep_dir = cb.config_hydrated.output_dir / spec.base.name
    cell_summaries = []

    for label, values, config in spec.cells():
        cell_dir = sweep_dir / label
        config = with_outputs(config, cell_dir)
        cell_summary = cell_dir / CELL_SUMMARY_FNAME
        cell_summaries.append(cell_summary)

        yield {
            "basename": "run sweep cell",
            "name": f"{cb.stub}/{label}",
            "doc": f"Run {label} of {cb.stub}",
            "actions": [
                (
                    run_sweep_cell,
                    [label, values, config, spec.report_time, cell_summary],
                    {"base": spec.base.physics},
                )
            ],
            "targets": [cell_summary],
            "uptodate": [config_changed(dump_yaml(config))],
        }

    summary = sweep_dir / SUMMARY_FNAME
    yield {
        "basename": "collect sweep summary",
        "name": cb.stub,
        "actions": [(collect_sweep_summary, [cell_summaries, summary], {})],
        "file_dep": cell_summaries,
        "targets": [summary],
    }


def run_convergence_study(spec: ConvergenceSpec, output_dir: Path) -> bool:
    """
    Run a convergence study, failing the task if the errors are not monotone
    """
    return run_convergence(spec, output_dir).monotone


def gen_convergence_tasks(cb: ConfigBundle, spec: ConvergenceSpec) -> Iterable[dict[str, Any]]:
    """
    Get the task running a convergence study

    Parameters
    ----------
    cb
        Config bundle of the study
    spec
        Ladder of the study

    Returns
    -------
        pydoit tasks
    """
    output_dir = cb.config_hydrated.output_dir
    yield {
        "basename": "run convergence study",
        "name": cb.stub,
        "actions": [(run_convergence_study, [spec, output_dir], {})],
        "targets": [output_dir / spec.base.name / CONVERGENCE_FNAME],
        "uptodate": [config_changed(dump_yaml(cb.config_hydrated))],
    }


def gen_study_tasks(config_bundles: Iterable[ConfigBundle]) -> Iterable[dict[str, Any]]:
    """
    Get every task of every study

    Parameters
    ----------
    config_bundles
        Hydrated study configurations

    Returns
    -------
        pydoit tasks
    """
    for cb in config_bundles:
        study_targets: list[Path] = []

        tasks: list[dict[str, Any]] = []
        spec = sweep_spec(cb.config_hydrated)
        if spec is not None:
            logger.info("Study %r: sweep of %d runs", cb.stub, spec.size)
            tasks.extend(gen_sweep_tasks(cb, spec))

        ladder = convergence_spec(cb.config_hydrated)
        if ladder is not None:
            tasks.extend(gen_convergence_tasks(cb, ladder))

        if not tasks:
            logger.warning("Study %r has neither a sweep nor a convergence ladder", cb.stub)
            continue

        for task in tasks:
            study_targets.extend(task.get("targets", []))
            yield task

        output_dir = cb.config_hydrated.output_dir
        yield {
            "basename": "generate checklist",
            "name": cb.stub,
            "actions": [(swallow_output(write_checklist), [output_dir], {})],
            "file_dep": study_targets,
            "targets": [checklist_path(output_dir)],
        }
