import math

import numpy as np
import pytest

from tcl_lab.core import (
    HARD_RATE,
    FieldPair,
    Grid1D,
    SwitchState,
    TclParams,
    deadband_cycle_time,
    deterministic_flow,
    drift,
    geometry,
)


def test_param_invariants_enforced():
    with pytest.raises(ValueError):
        TclParams(x_minus=0.0, x_down=-1.0, x_up=1.0, x_plus=2.0)
    with pytest.raises(ValueError):
        TclParams(x_minus=-2.0, x_down=1.0, x_up=-1.0, x_plus=2.0)
    with pytest.raises(ValueError):
        TclParams(x_minus=-2.0, x_down=-1.0, x_up=1.0, x_plus=2.0, tau=0.0)
    with pytest.raises(ValueError):
        TclParams(x_minus=-2.0, x_down=-1.0, x_up=1.0, x_plus=2.0, kappa=-0.1)
    with pytest.raises(ValueError):
        TclParams(x_minus=-2.0, x_down=-1.0, x_up=1.0, x_plus=2.0, rate=0.0)


def test_hard_flag(p1_hard, p1_soft):
    assert p1_hard.is_hard
    assert not p1_soft.is_hard


def test_deadband_cycle_time_p1(p1_hard, ln9):
    # direct evaluation with the canonical parameters: tau * ln 9
    assert deadband_cycle_time(p1_hard) == pytest.approx(ln9, abs=1e-14)


def test_cycle_time_equals_minus_tau_log_alpha_beta():
    rng = np.random.default_rng(7)
    for _ in range(200):
        xm, a, b, c = -5 * rng.random() - 0.1, rng.random(), rng.random(), rng.random()
        p = TclParams(x_minus=xm, x_down=xm + a, x_up=xm + a + b,
                      x_plus=xm + a + b + c, tau=0.1 + 3 * rng.random())
        g = geometry(p)
        assert deadband_cycle_time(p) == pytest.approx(-p.tau * math.log(g.alpha * g.beta),
                                                       rel=1e-12)
        assert g.t_dc == deadband_cycle_time(p)
        assert g.alpha > 0 and g.beta > 0


def test_cycle_time_diverges_near_degenerate_band():
    p = TclParams(x_minus=-2.0, x_down=-2.0 + 1e-9, x_up=1.0, x_plus=2.0)
    assert deadband_cycle_time(p) > 20.0


def test_geometry_p1(p1_hard):
    g = geometry(p1_hard)
    assert g.alpha == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert g.beta == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert g.u == pytest.approx(3.0, abs=1e-15)


def test_symmetric_parameters_give_equal_alpha_beta():
    p = TclParams(x_minus=-3.3, x_down=-0.7, x_up=0.7, x_plus=3.3)
    g = geometry(p)
    assert g.alpha == pytest.approx(g.beta, rel=1e-14)


def test_drift_values(p1_hard):
    assert drift(p1_hard.x_minus, SwitchState.UP, p1_hard) == 0.0
    assert drift(1.0, SwitchState.UP, p1_hard) == pytest.approx(-3.0)
    assert drift(-1.0, SwitchState.DOWN, p1_hard) == pytest.approx(3.0)


def test_flow_identity_and_crossing(p1_hard):
    assert deterministic_flow(0.37, SwitchState.UP, 0.0, p1_hard) == 0.37
    # cooling from x_up reaches x_down after tau*ln((x_up-x_minus)/(x_down-x_minus))
    t_cross = math.log(3.0)
    x = deterministic_flow(1.0, SwitchState.UP, t_cross, p1_hard)
    assert x == pytest.approx(-1.0, abs=1e-12)
    # long-time asymptote
    x_inf = deterministic_flow(1.0, SwitchState.UP, 60.0, p1_hard)
    assert abs(x_inf - p1_hard.x_minus) < 1e-12


def test_flow_composes(p1_hard):
    rng = np.random.default_rng(3)
    for _ in range(100):
        x0 = rng.uniform(-3, 3)
        a, b = rng.uniform(0, 2, size=2)
        s = SwitchState.UP if rng.random() < 0.5 else SwitchState.DOWN
        two_step = deterministic_flow(deterministic_flow(x0, s, a, p1_hard), s, b, p1_hard)
        one_step = deterministic_flow(x0, s, a + b, p1_hard)
        assert two_step == pytest.approx(one_step, abs=1e-12)


def test_full_cycle_duration(p1_hard):
    t_up = p1_hard.tau * math.log((p1_hard.x_up - p1_hard.x_minus)
                                  / (p1_hard.x_down - p1_hard.x_minus))
    x_mid = deterministic_flow(p1_hard.x_up, SwitchState.UP, t_up, p1_hard)
    assert x_mid == pytest.approx(p1_hard.x_down, abs=1e-13)
    t_down = p1_hard.tau * math.log((p1_hard.x_plus - p1_hard.x_down)
                                    / (p1_hard.x_plus - p1_hard.x_up))
    assert t_up + t_down == pytest.approx(deadband_cycle_time(p1_hard), abs=1e-12)


def test_grid_alignment_and_padding(p1_hard):
    grid = Grid1D.for_params(p1_hard, dx_target=0.021)
    assert grid.x_lo < p1_hard.x_minus and grid.x_hi > p1_hard.x_plus
    # thresholds land on faces
    faces = grid.faces
    assert np.min(np.abs(faces - p1_hard.x_down)) < 1e-12
    assert np.min(np.abs(faces - p1_hard.x_up)) < 1e-12
    assert grid.dx <= 0.021
    # uniform spacing
    assert np.allclose(np.diff(faces), grid.dx)


def test_grid_cell_of(p1_hard):
    grid = Grid1D.for_params(p1_hard, dx_target=0.05)
    i = grid.cell_of(p1_hard.x_up)
    assert grid.faces[i] == pytest.approx(p1_hard.x_up, abs=1e-12)


def test_field_pair_mass_and_normalize(p1_hard):
    grid = Grid1D(-3.0, 3.0, 120)
    up = np.exp(-grid.centers**2)
    down = 0.5 * np.exp(-((grid.centers - 1) ** 2))
    f = FieldPair(up, down, grid).normalized()
    assert f.mass() == pytest.approx(1.0, abs=1e-9)
    assert 0.0 < f.on_fraction() < 1.0
    g = FieldPair(np.zeros(120), np.zeros(120), grid)
    with pytest.raises(ValueError):
        g.normalized()
