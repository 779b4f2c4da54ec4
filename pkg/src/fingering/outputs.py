"""
Output files

Time series are written as CSV. Concentration snapshots are written as plain
text: a header line ``# nx ny Lx Ly t`` followed by ``ny`` rows of ``nx``
values, row ``j`` holding the cells at y-index ``j``. Snapshots whose name
ends in ``.gz`` are gzip-compressed.
"""
from __future__ import annotations

import gzip
import io
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import IO

import numpy as np
import pandas as pd
from attrs import define, field

from fingering.config import OutputConfig
from fingering.porous.diagnostics import TIMESERIES_COLUMNS, TimeSeries
from fingering.porous.grid import CellField, StructuredGrid
from fingering.porous.simulation import SimState, SimulationSink

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "%.17g"
"""Enough digits for every float to read back bit-equal"""

_HEADER_FIELDS = 5


def write_timeseries(series: TimeSeries, path: Path) -> None:
    """
    Write a time series as CSV

    The header is ``t,energy,mean,variance,mixing,l1,l2,linf``. An absent
    degree of mixing is written as an empty field. The output only depends
    on the values, so identical runs give identical files.

    Parameters
    ----------
    series
        Time series
    path
        Output file, parent directories are created
    """
    series.validate()
    path.parent.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(path, index=False, lineterminator="\n", na_rep="")
    logger.debug("Wrote %d samples to %s", len(series), path)


def read_timeseries(path: Path) -> TimeSeries:
    """
    Read a time series written by :func:`write_timeseries`

    Raises
    ------
    ValueError
        The header does not match
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if tuple(frame.columns) != TIMESERIES_COLUMNS:
        raise ValueError(  # noqa: TRY003
            f"{path}: expected columns {','.join(TIMESERIES_COLUMNS)}, "
            f"got {','.join(frame.columns)}"
        )

    return TimeSeries.from_frame(frame.astype(np.float64))


@contextmanager
def _open_text(path: Path, mode: str) -> Iterator[IO[str]]:
    if path.suffix != ".gz":
        with open(path, mode) as fh:
            yield fh
        return

    # mtime=0 keeps compressed output reproducible
    with gzip.GzipFile(path, mode + "b", mtime=0) as raw, io.TextIOWrapper(raw) as fh:
        yield fh


def write_snapshot(c: CellField, t: float, path: Path) -> None:
    """
    Write a concentration snapshot

    Parameters
    ----------
    c
        Concentration
    t
        Time of the snapshot
    path
        Output file, compressed if the name ends in ``.gz``
    """
    grid = c.grid
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"{grid.nx} {grid.ny} {grid.Lx!r} {grid.Ly!r} {float(t)!r}"
    with _open_text(path, "w") as fh:
        np.savetxt(fh, c.values.T, fmt=SNAPSHOT_FORMAT, header=header, comments="# ")


def read_snapshot(path: Path) -> tuple[CellField, float]:
    """
    Read a snapshot written by :func:`write_snapshot`

    Raises
    ------
    ValueError
        Malformed header or rows that do not match it

    Returns
    -------
        Concentration and time of the snapshot
    """
    with _open_text(path, "r") as fh:
        header = fh.readline().lstrip("#").split()
        if len(header) != _HEADER_FIELDS:
            raise ValueError(f"{path}: malformed snapshot header {header!r}")  # noqa: TRY003

        nx, ny = int(header[0]), int(header[1])
        Lx, Ly, t = (float(v) for v in header[2:])
        rows = np.loadtxt(fh, dtype=np.float64, ndmin=2)

    if rows.shape != (ny, nx):
        raise ValueError(  # noqa: TRY003
            f"{path}: expected {ny} rows of {nx} values, got shape {rows.shape}"
        )

    grid = StructuredGrid(Lx=Lx, Ly=Ly, nx=nx, ny=ny)
    return CellField(np.ascontiguousarray(rows.T), grid), t


@define
class SnapshotSink:
    """
    Write a snapshot every ``every`` samples and at the end of the run
    """

    directory: Path
    every: int
    compress: bool = False
    written: list[Path] = field(factory=list)
    _last_index: int = -1

    def _write(self, state: SimState, index: int) -> None:
        suffix = ".txt.gz" if self.compress else ".txt"
        path = self.directory / f"c_{index:06d}{suffix}"
        write_snapshot(state.c, state.t, path)
        self.written.append(path)
        self._last_index = index

    def on_sample(self, state: SimState, series: TimeSeries) -> None:
        """Write the sample if it falls on the cadence"""
        index = len(series) - 1
        if index % self.every == 0:
            self._write(state, index)

    def on_finish(self, state: SimState, series: TimeSeries) -> None:
        """Write the final state unless it was just written"""
        index = len(series) - 1
        if index != self._last_index:
            self._write(state, index)


@define
class TimeseriesSink:
    """
    Write the time series once the run has finished
    """

    path: Path

    def on_sample(self, state: SimState, series: TimeSeries) -> None:
        """Nothing to do until the end"""

    def on_finish(self, state: SimState, series: TimeSeries) -> None:
        """Write the CSV"""
        write_timeseries(series, self.path)
        logger.info("Wrote time series to %s", self.path)


def sinks_from_config(output: OutputConfig) -> list[SimulationSink]:
    """
    Sinks requested by the output section of a run configuration
    """
    sinks: list[SimulationSink] = []
    if output.timeseries is not None:
        sinks.append(TimeseriesSink(output.timeseries))
    if output.snapshot_every > 0:
        if output.snapshot_dir is None:
            logger.warning("snapshot_every is set but snapshot_dir is not, no snapshots are written")
        else:
            sinks.append(
                SnapshotSink(output.snapshot_dir, output.snapshot_every, output.gzip_snapshots)
            )

    return sinks
