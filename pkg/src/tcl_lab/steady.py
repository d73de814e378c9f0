"""Closed-form stationary distributions of the hard model.

In the stationary hard model a constant probability flux J circulates around
the deadband: Up density flows from x_up down to the absorbing wall at
x_down, reappears there as Down density, and flows back up.  Between the
walls each state solves the constant-flux equation

    kappa P' + ((x - m)/tau) P = J        (m = x_minus for Up, x_plus for Down)

whose wall-vanishing solution is a Gaussian envelope times a growing-kernel
integral, evaluated here in the cancellation-free Dawson form

    P_up(x) = (J/kappa) * sqrt(q) * [D(u/s) - exp((u_d^2 - u^2)/q) * D(u_d/s)]

with u = x - x_minus, u_d = x_down - x_minus, q = 2 kappa tau, s = sqrt(q)
and D the Dawson integral.  Outside the deadband the density continues as a
zero-flux Boltzmann tail.  J follows from overall normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import dawsn, erfcx

from tcl_lab.core import FieldPair, Grid1D, TclParams, deadband_cycle_time

__all__ = ["StationarySolution", "stationary_hard", "stationary_diffusionless_hard"]


@dataclass
class StationarySolution:
    """Normalized stationary field pair and the circulating flux J."""

    field: FieldPair
    flux: float


def _up_profile(x, params: TclParams):
    """Unnormalized Up density (J/kappa = 1) for scalar or array x."""
    q = 2.0 * params.kappa * params.tau
    s = math.sqrt(q)
    x = np.asarray(x, dtype=float)
    u = x - params.x_minus
    u_d = params.x_down - params.x_minus
    u_u = params.x_up - params.x_minus
    out = np.zeros_like(u)

    band = (x >= params.x_down) & (x <= params.x_up)
    ub = u[band]
    out[band] = s * (dawsn(ub / s) - np.exp((u_d**2 - ub**2) / q) * dawsn(u_d / s))

    tail = x > params.x_up
    ut = u[tail]
    # continue the deadband value at x_up with the zero-flux Gaussian tail
    band_val = s * (dawsn(u_u / s) - math.exp((u_d**2 - u_u**2) / q) * dawsn(u_d / s))
    out[tail] = band_val * np.exp((u_u**2 - ut**2) / q)
    return out


def _down_profile(x, params: TclParams):
    """Unnormalized Down density (J/kappa = 1); mirror image of the Up case."""
    q = 2.0 * params.kappa * params.tau
    s = math.sqrt(q)
    x = np.asarray(x, dtype=float)
    w = params.x_plus - x
    w_u = params.x_plus - params.x_up
    w_d = params.x_plus - params.x_down
    out = np.zeros_like(w)

    band = (x >= params.x_down) & (x <= params.x_up)
    wb = w[band]
    out[band] = s * (dawsn(wb / s) - np.exp((w_u**2 - wb**2) / q) * dawsn(w_u / s))

    tail = x < params.x_down
    wt = w[tail]
    band_val = s * (dawsn(w_d / s) - math.exp((w_u**2 - w_d**2) / q) * dawsn(w_u / s))
    out[tail] = band_val * np.exp((w_d**2 - wt**2) / q)
    return out


def _total_mass_per_unit_flux(params: TclParams) -> float:
    """integral of (P_up + P_down)/(J/kappa) dx over the whole line."""
    q = 2.0 * params.kappa * params.tau

    band_up, err_u = quad(lambda x: float(_up_profile(x, params)),
                          params.x_down, params.x_up, epsabs=1e-13, epsrel=1e-12,
                          limit=200)
    band_dn, err_d = quad(lambda x: float(_down_profile(x, params)),
                          params.x_down, params.x_up, epsabs=1e-13, epsrel=1e-12,
                          limit=200)

    # Boltzmann tails integrate exactly: edge value times
    # int_{edge}^inf exp((u_edge^2 - u^2)/q) du = sqrt(q) (sqrt(pi)/2) erfcx(u_edge/sqrt(q))
    s = math.sqrt(q)
    u_u = params.x_up - params.x_minus
    up_at_edge = float(_up_profile(params.x_up, params))
    tail_up = up_at_edge * s * 0.5 * math.sqrt(math.pi) * erfcx(u_u / s)
    w_d = params.x_plus - params.x_down
    dn_at_edge = float(_down_profile(params.x_down, params))
    tail_dn = dn_at_edge * s * 0.5 * math.sqrt(math.pi) * erfcx(w_d / s)

    return band_up + band_dn + tail_up + tail_dn


def stationary_hard(params: TclParams, grid: Grid1D) -> StationarySolution:
    """Analytic stationary state of the hard model with diffusion, on a grid.

    Returns cell-center samples normalized so that dx * sum(up + down) = 1
    against the continuum normalization, together with the flux J.
    """
    if not params.kappa > 0:
        raise ValueError("stationary_hard requires kappa > 0")
    mass = _total_mass_per_unit_flux(params)
    j_over_kappa = 1.0 / mass
    flux = params.kappa * j_over_kappa
    x = grid.centers
    up = j_over_kappa * _up_profile(x, params)
    down = j_over_kappa * _down_profile(x, params)
    return StationarySolution(field=FieldPair(up, down, grid), flux=flux)


def stationary_diffusionless_hard(params: TclParams, grid: Grid1D) -> StationarySolution:
    """kappa -> 0 limit: occupation uniform in time, P ~ tau/|x - target|.

    Supported on the open deadband; the flux equals one cycle per t_dc.
    """
    t_dc = deadband_cycle_time(params)
    x = grid.centers
    band = (x > params.x_down) & (x < params.x_up)
    up = np.zeros_like(x)
    down = np.zeros_like(x)
    up[band] = params.tau / (t_dc * (x[band] - params.x_minus))
    down[band] = params.tau / (t_dc * (params.x_plus - x[band]))
    return StationarySolution(field=FieldPair(up, down, grid), flux=1.0 / t_dc)
