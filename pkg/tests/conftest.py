import os

import numpy as np
import pytest

from src.config import KappaConfig, load_config
from src.mollifier import PolySpec

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def config_path(name: str) -> str:
    return os.path.join(CONFIG_DIR, name)


@pytest.fixture
def conrey_config() -> KappaConfig:
    return load_config(config_path("conrey.json"))


@pytest.fixture
def feng_config() -> KappaConfig:
    return load_config(config_path("feng_k3.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def linear_P() -> PolySpec:
    return PolySpec((0.0, 1.0), "P0")


@pytest.fixture
def linear_Q() -> PolySpec:
    return PolySpec.from_basis("q_odd", [0.5, 0.5], "Q")
