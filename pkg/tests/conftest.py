import numpy as np
import pytest

from bpac import ConstantSchedule, RouterConfig, ThresholdGrid, uniform_linear


@pytest.fixture
def default_config():
    return RouterConfig()


@pytest.fixture
def constant_config():
    return RouterConfig(schedule=ConstantSchedule(0.05))


@pytest.fixture
def coarse_grid():
    return ThresholdGrid.from_step(step=0.25)


@pytest.fixture
def uniform_spec():
    return uniform_linear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
