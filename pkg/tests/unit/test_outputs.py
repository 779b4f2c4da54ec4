import logging
import math

import numpy as np
import numpy.testing as npt
import pytest

from fingering.config import OutputConfig
from fingering.outputs import (
    SnapshotSink,
    TimeseriesSink,
    read_snapshot,
    read_timeseries,
    sinks_from_config,
    write_snapshot,
    write_timeseries,
)
from fingering.porous.diagnostics import TIMESERIES_COLUMNS, TimeSeries
from fingering.porous.grid import CellField, FaceField, StructuredGrid
from fingering.porous.simulation import SimState


@pytest.fixture
def grid():
    return StructuredGrid(Lx=3.0, Ly=4.0, nx=3, ny=4)


@pytest.fixture
def field(grid):
    rng = np.random.default_rng(0)
    return CellField(rng.uniform(1.0, 2.0, grid.shape) / 3.0, grid)


def _series(n, mixing_first=None):
    series = TimeSeries()
    for i in range(n):
        row = {name: 1.0 / (i + 3) for name in TIMESERIES_COLUMNS}
        row["t"] = 0.5 * i
        row["mixing"] = mixing_first if i == 0 else 0.1 * i
        series.append(**row)

    return series


def test_timeseries_roundtrip(tmp_path):
    series = _series(4)
    path = tmp_path / "out" / "timeseries.csv"

    write_timeseries(series, path)
    res = read_timeseries(path)

    assert path.read_text().splitlines()[0] == "t,energy,mean,variance,mixing,l1,l2,linf"
    assert math.isnan(res.mixing[0])
    assert res.t == series.t
    assert res.energy == series.energy


def test_timeseries_bad_header(tmp_path):
    path = tmp_path / "ts.csv"
    path.write_text("t,energy\n0,1\n")

    with pytest.raises(ValueError, match="expected columns"):
        read_timeseries(path)


def test_timeseries_refuses_invalid_series(tmp_path):
    series = _series(2)
    series.t[1] = 0.0

    with pytest.raises(ValueError, match="strictly increasing"):
        write_timeseries(series, tmp_path / "ts.csv")


@pytest.mark.parametrize("name", ("c.txt", "c.txt.gz"))
def test_snapshot_roundtrip(tmp_path, field, name):
    path = tmp_path / name

    write_snapshot(field, 1.25, path)
    res, t = read_snapshot(path)

    assert t == 1.25
    assert res.grid == field.grid
    npt.assert_array_equal(res.values, field.values)


def test_snapshot_layout(tmp_path, field):
    path = tmp_path / "c.txt"

    write_snapshot(field, 0.0, path)
    lines = path.read_text().splitlines()

    assert lines[0] == "# 3 4 3.0 4.0 0.0"
    # One row per y index, one column per x index
    assert len(lines) == 1 + 4
    assert len(lines[1].split()) == 3
    assert float(lines[2].split()[0]) == field.values[0, 1]


def test_compressed_snapshot_is_reproducible(tmp_path, field):
    path = tmp_path / "c.txt.gz"

    write_snapshot(field, 2.0, path)
    first = path.read_bytes()
    write_snapshot(field, 2.0, path)

    assert path.read_bytes() == first


def test_malformed_snapshot(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# 3 4 3.0\n1 2 3\n")

    with pytest.raises(ValueError, match="malformed snapshot header"):
        read_snapshot(path)


def test_snapshot_shape_mismatch(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# 3 2 3.0 2.0 0.0\n1 2 3\n")

    with pytest.raises(ValueError, match="expected 2 rows of 3 values"):
        read_snapshot(path)


def _state(field, t):
    return SimState(t=t, c=field, u=FaceField.zeros(field.grid), p=CellField.zeros(field.grid))


def test_snapshot_sink_cadence(tmp_path, field):
    sink = SnapshotSink(tmp_path, every=2)
    series = TimeSeries()

    for i in range(4):
        series = _series(i + 1)
        sink.on_sample(_state(field, 0.5 * i), series)
    sink.on_finish(_state(field, 1.5), series)

    assert [p.name for p in sink.written] == ["c_000000.txt", "c_000002.txt", "c_000003.txt"]
    _, t = read_snapshot(sink.written[-1])
    assert t == 1.5


def test_snapshot_sink_does_not_repeat_final(tmp_path, field):
    sink = SnapshotSink(tmp_path, every=1, compress=True)
    series = _series(1)

    sink.on_sample(_state(field, 0.0), series)
    sink.on_finish(_state(field, 0.0), series)

    assert [p.name for p in sink.written] == ["c_000000.txt.gz"]


def test_timeseries_sink(tmp_path, field):
    sink = TimeseriesSink(tmp_path / "ts.csv")
    series = _series(3)

    sink.on_sample(_state(field, 1.0), series)
    assert not sink.path.exists()

    sink.on_finish(_state(field, 1.0), series)
    assert read_timeseries(sink.path).t == series.t


def test_sinks_from_config(tmp_path, caplog):
    assert sinks_from_config(OutputConfig()) == []

    sinks = sinks_from_config(
        OutputConfig(timeseries=tmp_path / "ts.csv", snapshot_dir=tmp_path, snapshot_every=5)
    )
    assert [type(s) for s in sinks] == [TimeseriesSink, SnapshotSink]

    with caplog.at_level(logging.WARNING):
        assert sinks_from_config(OutputConfig(snapshot_every=5)) == []
    assert "snapshot_dir is not" in caplog.text
