import numpy as np
import pytest

from sparsebath.dictionary import AtomGrid
from sparsebath.units import ANGULAR_PER_WAVENUMBER


def damped_cosines(atoms, times):
    """Independent reference for sums of a * exp(-g t) cos(W t), wavenumber inputs."""
    out = np.zeros_like(np.asarray(times, dtype=float))
    for g, w, a in atoms:
        out = out + a * np.exp(-g * ANGULAR_PER_WAVENUMBER * times) * np.cos(
            w * ANGULAR_PER_WAVENUMBER * times
        )
    return out


@pytest.fixture
def small_grid():
    return AtomGrid(np.arange(0.0, 60.0 + 1e-9, 6.0), np.arange(0.0, 400.0 + 1e-9, 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
