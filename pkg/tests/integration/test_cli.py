import logging
import re

import attrs
import pytest
from click.testing import CliRunner

import fingering
from fingering.cli import cli
from fingering.config import TimeConfig, write_run_config
from fingering.outputs import read_timeseries


@pytest.fixture
def config_file(small_config, tmp_path):
    path = tmp_path / "small.yaml"
    config = attrs.evolve(small_config, time=TimeConfig(t_end=1.0, sample_interval=0.5, dt_max=0.5))
    write_run_config(config, path)

    return path


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("FINGERING_JOBS", raising=False)

    yield CliRunner()

    root_logger = logging.getLogger()
    for handler in [h for h in root_logger.handlers if getattr(h, "_fingering", False)]:
        root_logger.removeHandler(handler)


def test_version(runner):
    result = runner.invoke(cli, ["--version"])

    assert result.exit_code == 0
    assert fingering.__version__ in result.output


def test_run(runner, config_file, tmp_path):
    out = tmp_path / "out"

    result = runner.invoke(cli, ["run", str(config_file), "--output-dir", str(out), "--seed", "3"])

    assert result.exit_code == 0, result.output
    assert re.search(r"small: t=1 steps=\d+ energy=", result.output)
    assert read_timeseries(out / "timeseries.csv").t == [0.0, 0.5, 1.0]


def test_run_invalid_config(runner, tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("grid:\n  nx: 1\n")

    result = runner.invoke(cli, ["run", str(path)])

    assert result.exit_code == 1
    assert "grid.nx" in result.output


def test_run_missing_config(runner, tmp_path):
    result = runner.invoke(cli, ["run", str(tmp_path / "missing.yaml")])

    assert result.exit_code == 2


def test_fitdecay(runner, small_config, tmp_path):
    config_path = tmp_path / "reactive.yaml"
    write_run_config(
        attrs.evolve(small_config, physics=attrs.evolve(small_config.physics, kappa=0.5)), config_path
    )
    out = tmp_path / "out"
    assert runner.invoke(cli, ["run", str(config_path), "--output-dir", str(out)]).exit_code == 0

    result = runner.invoke(
        cli, ["fitdecay", str(out / "timeseries.csv"), "--kappa", "0.5", "--k", "1", "--window", "0:2"]
    )

    assert result.exit_code == 0, result.output
    assert "rate=0.25" in result.output
    assert "window=0:2 samples=5" in result.output
    assert "theoretical_rate=0.25" in result.output


def test_fitdecay_too_few_samples(runner, config_file, tmp_path):
    out = tmp_path / "out"
    runner.invoke(cli, ["run", str(config_file), "--output-dir", str(out)])

    result = runner.invoke(cli, ["fitdecay", str(out / "timeseries.csv"), "--window", "0:0.5"])

    assert result.exit_code == 1
    assert "at least 3 samples" in result.output


@pytest.mark.parametrize("axis", ("alpha", "alpha=", "alpha=1,x"))
def test_sweep_bad_axis(runner, config_file, axis):
    result = runner.invoke(cli, ["sweep", str(config_file), "--axis", axis])

    assert result.exit_code == 2


@pytest.mark.parametrize("second", ("alpha=3", "physics.alpha=3"))
def test_sweep_repeated_axis(runner, config_file, tmp_path, second):
    out = tmp_path / "sweep"

    result = runner.invoke(
        cli,
        ["sweep", str(config_file), "--axis", "alpha=1,2", "--axis", second, "--output-dir", str(out)],
    )

    assert result.exit_code == 2
    assert "more than once" in result.output
    assert not out.exists()


def test_sweep(runner, config_file, tmp_path):
    out = tmp_path / "sweep"

    result = runner.invoke(
        cli, ["sweep", str(config_file), "--axis", "alpha=0,1", "--output-dir", str(out)]
    )

    assert result.exit_code == 0, result.output
    assert (out / "small" / "summary.csv").exists()
    assert (out / "small" / "alpha=0" / "timeseries.csv").exists()


def test_converge_bad_ladder(runner, config_file):
    result = runner.invoke(
        cli, ["converge", str(config_file), "--meshes", "8x16,4x8", "--reference", "16x32"]
    )

    assert result.exit_code == 1
    assert "coarse to fine" in result.output
