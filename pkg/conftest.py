import numpy as np
import pytest

from mesh import Grid, Grids, TimeGrid
from omega import canonical_omega


@pytest.fixture
def small_grids():
    return Grids(Grid(1.0, 31), TimeGrid(0.5, 16))


@pytest.fixture
def control_grids():
    # L = 3 keeps the boundary synthesis map contractive at this resolution
    return Grids(Grid(3.0, 31), TimeGrid(0.25, 16))


@pytest.fixture
def omega1():
    return canonical_omega(1.0)


@pytest.fixture
def omega3():
    return canonical_omega(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def isolated_stores(tmp_path, monkeypatch):
    monkeypatch.setenv('KAWACTL_CALIBRATION', str(tmp_path / 'calibration.db'))
    monkeypatch.setenv('KAWACTL_RUNS', str(tmp_path / 'runs.db'))
