from pathlib import Path

import pytest

from fingering.config import GridConfig, RunConfig, TimeConfig
from fingering.porous.transport import InitialCondition


@pytest.fixture
def config_dir() -> Path:
    return Path(__file__).parents[1] / "data" / "configuration"


@pytest.fixture
def small_config() -> RunConfig:
    """
    Layered run on a coarse grid, quick enough for integration tests
    """
    return RunConfig(
        name="small",
        grid=GridConfig(Lx=10.0, Ly=20.0, nx=8, ny=16),
        initial_condition=InitialCondition(interface_y=10.0, perturbation_amplitude=0.05, seed=1),
        time=TimeConfig(t_end=2.0, sample_interval=0.5, dt_max=0.5),
    )
