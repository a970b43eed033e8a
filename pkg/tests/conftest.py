import numpy as np
import pytest

from besovlab.fourier_field import Field, Grid
from besovlab.littlewood_paley import build_partition


@pytest.fixture(scope="session")
def g32():
    return Grid(2, 32)


@pytest.fixture(scope="session")
def g64():
    return Grid(2, 64)


@pytest.fixture(scope="session")
def part32(g32):
    return build_partition(g32)


@pytest.fixture(scope="session")
def part64(g64):
    return build_partition(g64)


def random_field(grid, seed=0, rank=0, kmax=None):
    """Smooth random real field with modes up to ``kmax`` (default Nyquist / 2)."""
    rng = np.random.default_rng(seed)
    shape = ((grid.dim,) if rank else ()) + grid.shape
    kmax = grid.nyquist / 2 if kmax is None else kmax
    noise = Field(grid, rng.standard_normal(shape))
    return Field.from_spectral(grid, noise.hat * (grid.kmag <= kmax), hermitian=True)


def mode(grid, k, amp=1.0, phase=0.0):
    """``amp cos(k . x + phase)`` on the grid."""
    x = grid.coords
    arg = sum(kk * xx for kk, xx in zip(k, x)) + phase
    return Field(grid, amp * np.cos(arg))
