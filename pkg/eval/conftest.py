from __future__ import annotations

import os
import sys

import numpy as np
import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
REPO_ROOT = os.path.dirname(HERE)
sys.path.insert(0, REPO_ROOT)

from src.models import RunConfig  # noqa: E402
from src.services.data import apply_overrides, load_config  # noqa: E402
from src.services.sut import SyntheticSut  # noqa: E402
from src.services.types import GenomeSpace  # noqa: E402


@pytest.fixture(scope="session")
def default_config() -> RunConfig:
    return load_config(os.path.join(REPO_ROOT, "config", "default.yaml"))


@pytest.fixture(scope="session")
def sut(default_config) -> SyntheticSut:
    return SyntheticSut.from_config(default_config)


@pytest.fixture
def small_config(default_config) -> RunConfig:
    """Default SUT with a budget of a few generations."""
    return apply_overrides(default_config, evaluation_budget=27 * 8, seed=3)


@pytest.fixture
def space() -> GenomeSpace:
    return GenomeSpace()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
