import os
import sys

import pytest

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from backend.fields import GaussianProfile, Grid, discretize  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance runs (deselect with -m 'not slow')")


@pytest.fixture
def grid_1d():
    return Grid(d=1, half_width=8.0, n=256)


@pytest.fixture
def grid_2d():
    return Grid(d=2, half_width=5.0, n=64)


@pytest.fixture
def standard_gaussian_1d():
    grid = Grid(d=1, half_width=8.0, n=512)
    return discretize(GaussianProfile(center=(0.0,), sigma=1.0, mass=1.0), grid)
