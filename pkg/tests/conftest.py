import numpy as np
import pytest
from hypothesis import settings

from mzeuler.integrate import random_resolved_field
from mzeuler.spectral import build_grid, hermitian_enforce

settings.register_profile("ci", deadline=None, max_examples=25)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def grid4():
    return build_grid(4, 8)


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def field4(grid4, rng):
    return random_resolved_field(grid4, rng)


def hermitian_noise(grid, rng):
    u = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return hermitian_enforce(grid, u)


def rel_err(a, b):
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
