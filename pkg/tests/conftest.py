import numpy as np
import pytest

from fracburgers.spectral import Grid, SpectralField

ACCEPTANCE_LINES = []


def random_field(grid: Grid, rng, kmax=None, decay=0.0) -> SpectralField:
    """Random band-limited field with modes 1..kmax, amplitudes ~ k^-decay."""
    kmax = kmax or grid.n_points // 4
    c = np.zeros(grid.n_modes, dtype=complex)
    k = np.arange(1, kmax + 1)
    c[1 : kmax + 1] = (rng.standard_normal(kmax) + 1j * rng.standard_normal(kmax)) * k**-decay
    return SpectralField(grid, c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
