import math

import numpy.testing as npt
import pytest

from fingering.config import RunConfig
from fingering.exceptions import ConfigValidationError
from fingering.porous.diagnostics import TIMESERIES_COLUMNS, TimeSeries
from fingering.porous.model import PhysicalParams
from fingering.studies import (
    ConvergenceSpec,
    SweepSpec,
    default_jobs,
    observed_orders,
    override,
    resolve_axis,
    summarise_run,
    time_series_error,
)


def test_resolve_axis():
    assert resolve_axis("alpha") == "physics.alpha"
    assert resolve_axis("seed") == "initial_condition.seed"
    assert resolve_axis("time.t_end") == "time.t_end"


@pytest.mark.parametrize(
    "axis, value, check",
    (
        ("alpha", 3.0, lambda c: c.physics.alpha == 3.0),
        ("physics.R", 0.0, lambda c: c.physics.R == 0.0),
        ("nx", 48.0, lambda c: c.grid.nx == 48 and isinstance(c.grid.nx, int)),
        ("time.t_end", 10.0, lambda c: c.time.t_end == 10.0),
    ),
)
def test_override(axis, value, check):
    assert check(override(RunConfig(), axis, value))


def test_override_leaves_base_untouched():
    base = RunConfig()

    override(base, "kappa", 0.5)

    assert base.physics.kappa == 0.0


@pytest.mark.parametrize(
    "axis, value, match",
    (
        ("nx", 10.5, "expected an integer"),
        ("physics.viscosity", 1.0, "unknown configuration path"),
        ("D", -1.0, "physics.D"),
        ("nx", 1.0, "grid.nx"),
    ),
)
def test_override_errors(axis, value, match):
    with pytest.raises(ConfigValidationError, match=match):
        override(RunConfig(), axis, value)


def test_sweep_cells():
    spec = SweepSpec(base=RunConfig(name="base"), axes={"alpha": [1.0, 2.0], "R": [0.0, 0.5, 1.0]})

    cells = spec.cells()

    assert spec.size == 6
    assert len(cells) == 6
    label, values, config = cells[1]
    assert label == "alpha=1_R=0.5"
    assert values == {"alpha": 1.0, "R": 0.5}
    assert config.name == label
    assert config.physics == PhysicalParams(alpha=1.0, R=0.5)


def test_close_values_get_distinct_labels():
    spec = SweepSpec(base=RunConfig(), axes={"kappa": [0.1000001, 0.1000002, 0.25], "D": [1 / 3]})

    labels = [label for label, _, _ in spec.cells()]

    assert labels == [
        "kappa=0.1000001_D=0.3333333333333333",
        "kappa=0.1000002_D=0.3333333333333333",
        "kappa=0.25_D=0.3333333333333333",
    ]


def test_sweep_rejects_repeated_parameter():
    with pytest.raises(ValueError, match="more than once"):
        SweepSpec(base=RunConfig(), axes={"alpha": [1.0], "physics.alpha": [2.0]})


@pytest.mark.parametrize("axes", ({}, {"alpha": []}))
def test_sweep_needs_values(axes):
    with pytest.raises(ValueError, match="sweep"):
        SweepSpec(base=RunConfig(), axes=axes)


def test_convergence_spec():
    spec = ConvergenceSpec(base=RunConfig(name="ladder"), meshes=[[8, 16], [16, 32]], reference=[32, 64])

    assert spec.meshes == ((8, 16), (16, 32))
    assert spec.reference == (32, 64)
    config = spec.config_for((16, 32))
    assert (config.grid.nx, config.grid.ny) == (16, 32)
    assert config.name == "ladder_16x32"


@pytest.mark.parametrize(
    "meshes, reference, match",
    (
        ([], (8, 8), "empty"),
        ([(16, 16), (8, 8)], (32, 32), "coarse to fine"),
        ([(8, 8), (8, 8)], (32, 32), "coarse to fine"),
        ([(8, 8), (32, 32)], (16, 16), "coarser than"),
        ([(1, 8)], (16, 16), "at least 2 cells"),
    ),
)
def test_convergence_spec_errors(meshes, reference, match):
    with pytest.raises(ValueError, match=match):
        ConvergenceSpec(base=RunConfig(), meshes=meshes, reference=reference)


def test_time_series_error_identical():
    t = [0.0, 1.0, 2.0]

    assert time_series_error(t, [1.0, 2.0, 3.0], t, [1.0, 2.0, 3.0]) == (0.0, 0.0)


def test_time_series_error_offset():
    t = [0.0, 0.5, 1.0, 1.5, 2.0]

    l2, linf = time_series_error(t, [1.0] * 5, t, [0.0] * 5)

    npt.assert_allclose(l2, math.sqrt(2.0))
    assert linf == 1.0


def test_time_series_error_interpolates_and_scales():
    l2, linf = time_series_error(
        [0.0, 2.0], [0.0, 4.0], [0.0, 1.0, 2.0], [0.0, 4.0, 8.0], relative=True
    )

    # The coarse series gives 2 at t = 1, the reference 4
    npt.assert_allclose(linf, 0.5)
    assert 0 < l2 < 1


def test_observed_orders():
    res = observed_orders([0.5, 0.25, 0.125], [4.0, 1.0, 0.0])

    assert math.isnan(res[0])
    npt.assert_allclose(res[1], 2.0)
    assert math.isnan(res[2])


@pytest.mark.parametrize("raw, exp", ((None, 1), ("", 1), ("4", 4), ("-1", -1)))
def test_default_jobs(monkeypatch, raw, exp):
    if raw is None:
        monkeypatch.delenv("FINGERING_JOBS", raising=False)
    else:
        monkeypatch.setenv("FINGERING_JOBS", raw)

    assert default_jobs() == exp


@pytest.mark.parametrize("raw", ("0", "many"))
def test_default_jobs_invalid(monkeypatch, raw):
    monkeypatch.setenv("FINGERING_JOBS", raw)

    with pytest.raises(ValueError, match="FINGERING_JOBS"):
        default_jobs()


def _decaying_series(rate, n=21):
    series = TimeSeries()
    for i in range(n):
        t = float(i)
        row = {name: 1.0 for name in TIMESERIES_COLUMNS}
        row.update(t=t, mixing=0.0, energy=0.1 * i)
        row.update(l1=2.0 * math.exp(-rate * t), l2=math.exp(-rate * t))
        series.append(**row)

    return series


def test_summarise_run_with_reaction():
    config = RunConfig(physics=PhysicalParams(kappa=0.2, k=1.0))

    row = summarise_run(config, _decaying_series(0.1), energy_bound_value=3.0, report_time=5.5)

    npt.assert_allclose(row["rate_L1"], 0.1)
    npt.assert_allclose(row["rate_L2_squared"], 0.2)
    assert row["rate_L1_theory"] == 0.1
    npt.assert_allclose(row["energy_at_report_time"], 0.55)
    assert row["energy_bound_ok"] is True
    assert row["final_time"] == 20.0
    assert row["l1_envelope_ok"] is True
    assert math.isnan(row["final_variance_bound"])
    assert "mixing_ratio_theory" not in row


def test_summarise_run_without_reaction():
    row = summarise_run(RunConfig(), _decaying_series(0.0), energy_bound_value=None, report_time=None)

    assert math.isnan(row["rate_L1"])
    assert math.isnan(row["energy_at_report_time"])
    assert row["energy_bound_ok"] is None
    assert row["l1_envelope_ok"] is True
    # Continuum bound with M = 200 / pi and k = 1 on the default domain
    npt.assert_allclose(row["final_variance_bound"], math.exp(-0.1 * math.pi**2 / 200.0**2))


def test_summarise_run_against_base():
    config = RunConfig(physics=PhysicalParams(alpha=2.0, k=2.0))

    row = summarise_run(
        config,
        _decaying_series(0.0),
        energy_bound_value=None,
        report_time=None,
        base=PhysicalParams(alpha=1.0, k=0.0),
    )

    npt.assert_allclose(row["energy_bound_ratio_theory"], 6.8 / 2.6)
    npt.assert_allclose(row["mixing_ratio_theory"], 1.0 / 3.0)


def test_l1_above_envelope_is_flagged():
    config = RunConfig(physics=PhysicalParams(kappa=0.4, k=1.0))

    row = summarise_run(config, _decaying_series(0.1), energy_bound_value=None, report_time=None)

    assert row["l1_envelope_ok"] is False
