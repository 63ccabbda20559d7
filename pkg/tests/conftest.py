import pytest

from bousscontrol.geometry import ControlPatch, bump_on_solver_grids
from bousscontrol.grids import GridSpec, TimeGrid


@pytest.fixture
def grid16():
    return GridSpec(16, 16)


@pytest.fixture
def tgrid64():
    return TimeGrid(1.0, 64)


@pytest.fixture
def patch():
    return ControlPatch((0.5, 0.5), (0.2, 0.2))


@pytest.fixture
def bumps16(grid16, patch):
    return bump_on_solver_grids(grid16, patch)


def rand_u(grid, rng):
    a = rng.standard_normal((grid.nx + 1, grid.ny))
    a[0] = a[-1] = 0.0
    return a


def rand_v(grid, rng):
    a = rng.standard_normal((grid.nx, grid.ny + 1))
    a[:, 0] = a[:, -1] = 0.0
    return a


def rand_cells(grid, rng):
    return rng.standard_normal((grid.nx, grid.ny))


def rand_div_free(grid, rng):
    """Exactly divergence-free pair from a random node stream function."""
    psi = rng.standard_normal((grid.nx + 1, grid.ny + 1))
    psi[0, :] = psi[-1, :] = psi[:, 0] = psi[:, -1] = 0.0
    u = (psi[:, 1:] - psi[:, :-1]) / grid.hy
    v = -(psi[1:, :] - psi[:-1, :]) / grid.hx
    return u, v
