import math

import numpy as np
import pytest
from scipy.integrate import quad

from tcl_lab.core import Grid1D, TclParams
from tcl_lab.steady import stationary_diffusionless_hard, stationary_hard


@pytest.fixture(scope="module")
def solution(p1_hard):
    grid = Grid1D.for_params(p1_hard, dx_target=0.002)
    return grid, stationary_hard(p1_hard, grid)


def test_normalized(solution):
    grid, sol = solution
    # cell-center Riemann sum of a smooth normalized density
    assert sol.field.mass() == pytest.approx(1.0, abs=5e-6)


def test_support(solution, p1_hard):
    grid, sol = solution
    x = grid.centers
    assert np.all(sol.field.up[x < p1_hard.x_down] == 0.0)
    assert np.all(sol.field.down[x > p1_hard.x_up] == 0.0)
    assert sol.flux > 0


def test_symmetry(solution, p1_hard):
    grid, sol = solution
    # symmetric parameters: P_up(x) = P_down(-x); cell centers mirror exactly
    assert np.allclose(sol.field.up, sol.field.down[::-1], rtol=0, atol=1e-10)


def test_flux_ode_residual(p1_hard):
    """The constructed solution must carry constant flux -J across the deadband.

    Probability flux for the Up state: -kappa P' - ((x - x_minus)/tau) P = -J.
    High-order central differences on a fine grid."""
    grid = Grid1D.for_params(p1_hard, dx_target=0.0005)
    sol = stationary_hard(p1_hard, grid)
    x = grid.centers
    h = grid.dx
    band = (x > p1_hard.x_down + 5 * h) & (x < p1_hard.x_up - 5 * h)
    idx = np.where(band)[0]
    p = sol.field.up
    # fourth-order first derivative
    dp = (p[idx - 2] - 8 * p[idx - 1] + 8 * p[idx + 1] - p[idx + 2]) / (12 * h)
    flux = -p1_hard.kappa * dp - ((x[idx] - p1_hard.x_minus) / p1_hard.tau) * p[idx]
    resid = np.abs(flux + sol.flux) / sol.flux
    assert resid.max() < 1e-6


def test_up_density_matches_ballistic_at_injection(p1_hard):
    # at the injection point the density must pass J / |v(x_up)|
    grid = Grid1D.for_params(p1_hard, dx_target=0.0005)
    sol = stationary_hard(p1_hard, grid)
    i = grid.cell_of(p1_hard.x_up)
    v = (p1_hard.x_up - p1_hard.x_minus) / p1_hard.tau
    assert sol.field.up[i] == pytest.approx(sol.flux / v, rel=0.05)


def test_diffusionless_masses(p1_hard, ln9):
    grid = Grid1D(-2.0, 2.0, 4000)
    p0 = TclParams(**{**p1_hard.__dict__, "kappa": 0.0})
    sol = stationary_diffusionless_hard(p0, grid)
    assert sol.field.mass() == pytest.approx(1.0, rel=1e-6)
    # symmetric parameters: half the mass in each state
    assert sol.field.on_fraction() == pytest.approx(0.5, abs=1e-9)
    # unnormalized on-state integral: ln 3
    raw = quad(lambda x: 1.0 / (x + 2.0), -1.0, 1.0)[0]
    assert raw == pytest.approx(math.log(3.0), rel=1e-10)
    assert sol.flux == pytest.approx(1.0 / ln9, rel=1e-12)


def test_small_kappa_converges_to_diffusionless(p1_hard):
    """L1 distance to the kappa -> 0 profile decreases monotonically in kappa."""
    grid = Grid1D(-2.5, 2.5, 2500)
    p0 = TclParams(**{**p1_hard.__dict__, "kappa": 0.0})
    limit = stationary_diffusionless_hard(p0, grid)
    dists = []
    for kap in [0.1, 0.03, 0.01, 0.003]:
        p = TclParams(**{**p1_hard.__dict__, "kappa": kap})
        sol = stationary_hard(p, grid)
        dists.append(sol.field.l1_distance(limit.field))
    assert all(d2 < d1 for d1, d2 in zip(dists, dists[1:]))
