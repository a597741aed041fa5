import numpy as np
import pytest

from prexel.config import SensorConfig, default_piezo


@pytest.fixture
def piezo():
    return default_piezo()


@pytest.fixture
def config16():
    return SensorConfig(preset="16px")


@pytest.fixture
def config64():
    return SensorConfig(preset="64px")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
