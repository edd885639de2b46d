from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kglab.domain import Grid, ModelParams  # noqa: E402
from kglab.spectral import spectral_data  # noqa: E402


@pytest.fixture(scope="session")
def small_params() -> ModelParams:
    """Coarse grid (h = 0.025) for fast unit tests."""
    return ModelParams(2.0, 20.0, 801)


@pytest.fixture(scope="session")
def small_grid(small_params) -> Grid:
    return Grid.from_params(small_params)


@pytest.fixture(scope="session")
def small_sd(small_params):
    return spectral_data(small_params)
