import math

import pytest

from tcl_lab.core import HARD_RATE, TclParams


@pytest.fixture(scope="session")
def p1_hard():
    """Canonical symmetric geometry, hard model, kappa = 0.1."""
    return TclParams(x_minus=-2.0, x_down=-1.0, x_up=1.0, x_plus=2.0,
                     tau=1.0, kappa=0.1, rate=HARD_RATE)


@pytest.fixture(scope="session")
def p1_soft():
    """Canonical geometry, soft model with r = 1, kappa = 0."""
    return TclParams(x_minus=-2.0, x_down=-1.0, x_up=1.0, x_plus=2.0,
                     tau=1.0, kappa=0.0, rate=1.0)


@pytest.fixture(scope="session")
def ln9():
    return math.log(9.0)
