import math

import numpy as np
import pytest

from tools.atom import PseudoPotential, make_grid, scf_atom
from tools.coulomb2d import build_kernel
from tools.lattice2d import honeycomb


@pytest.fixture(scope="session")
def hexagonal():
    return honeycomb()


@pytest.fixture(scope="session")
def unit_kernel(hexagonal):
    return build_kernel(hexagonal.bravais, 1.0)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(800, 30.0)


@pytest.fixture(scope="session")
def reference_atom(small_grid):
    """Default bump atom on a coarse grid, enough for qualitative checks"""
    return scf_atom(PseudoPotential(eta=4.0, radius=1.0), small_grid, mixing=0.5, tol=1e-9)


@pytest.fixture
def hydrogen_orbital():
    def v(r):
        return math.sqrt(2.0 / math.pi) * np.exp(-np.asarray(r, dtype=float))
    return v
