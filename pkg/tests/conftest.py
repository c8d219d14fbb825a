import numpy as np
import pytest

from micromaser.fockspace import MaserParams
from micromaser.settings import DEFAULT_NUMERICS

BASE = MaserParams(n_ex=7.0, nu=0.054, phi=1.0, eta_a=0.4, eta_b=0.4)
TRAP = float(np.pi / np.sqrt(2.0))


@pytest.fixture
def base():
    return BASE


@pytest.fixture
def numerics():
    return DEFAULT_NUMERICS


def random_state(n_max, seed=0, support=None):
    """Random normalized weights vanishing on the upper half (clear of the cutoff)."""
    rng = np.random.default_rng(seed)
    v = rng.random(n_max + 1)
    v[(support if support is not None else n_max // 2):] = 0.0
    return v / v.sum()
