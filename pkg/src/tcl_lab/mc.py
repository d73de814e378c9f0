"""Monte Carlo simulation of device ensembles.

Within a discrete state the temperature follows an exact Ornstein-Uhlenbeck
transition (no time-step bias in the marginals): decay toward the state
target plus a Gaussian increment of variance kappa*tau*(1 - e^(-2 dt/tau)).
The time step only controls switching resolution.  Soft switching fires with
probability 1 - e^(-r dt) evaluated on the pre-step position; hard switching
is resolved inside the step by solving the crossing time, flipping the state
at the threshold and advancing the remainder, which removes the O(dt)
boundary bias.

Randomness comes from counter-based Philox streams keyed by (seed, step), so
a run is bit-reproducible for a fixed (seed, params, schedule) regardless of
how the device axis is processed.

A cycle completes when a device passes through the reference point
(x_up, Up): the hard model reaches it exactly at each off->on switch, the
soft model when an Up device crosses x_up downward after its excursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tcl_lab.core import FieldPair, Grid1D, SwitchState, TclParams

__all__ = [
    "DeviceState",
    "Snapshot",
    "EnsembleTrace",
    "FluxStats",
    "step_device",
    "simulate_ensemble",
    "empirical_distribution",
    "flux_statistics",
]


@dataclass
class DeviceState:
    x: float
    sigma: SwitchState
    cycles_completed: int = 0
    last_completion: float | None = None  # time of the last (x_up, Up) passage
    time: float = 0.0


@dataclass
class Snapshot:
    time: float
    x: np.ndarray
    sigma_up: np.ndarray       # bool, True = Up
    cycles: np.ndarray


@dataclass
class EnsembleTrace:
    times: np.ndarray
    on_fraction: np.ndarray
    snapshots: list[Snapshot]
    cycles: np.ndarray          # per-device completed cycles at t_end
    cycle_durations: np.ndarray | None
    seed: int
    dt: float
    params: TclParams
    excursion_durations: np.ndarray | None = None
    cycle_starts: np.ndarray | None = None
    excursion_starts: np.ndarray | None = None

    def snapshot_at(self, t: float) -> Snapshot:
        for snap in self.snapshots:
            if abs(snap.time - t) <= 0.5001 * self.dt:
                return snap
        raise KeyError(f"no snapshot recorded at t={t}")


def _ou_increment_std(params: TclParams, dt) -> float:
    return math.sqrt(params.kappa * params.tau * (-math.expm1(-2.0 * dt / params.tau)))


def _crossing_time(x0, threshold, target, tau):
    """Time for the noiseless flow from x0 to reach the threshold."""
    return tau * np.log((x0 - target) / (threshold - target))


def step_device(state: DeviceState, dt: float, params: TclParams,
                rng: np.random.Generator) -> DeviceState:
    """Advance a single device by dt.  Reference (scalar) implementation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > params.tau / 100.0 + 1e-15:
        raise ValueError("dt exceeds dt_max = tau/100")
    x, sigma = state.x, state.sigma
    cycles = state.cycles_completed
    last = state.last_completion
    t_now = state.time

    if params.is_hard:
        rem = dt
        for _ in range(3):
            m = params.target(sigma)
            decay = math.exp(-rem / params.tau)
            x_try = x * decay + m * (1 - decay)
            var_step = 0.0
            if params.kappa > 0:
                std = _ou_increment_std(params, rem)
                var_step = std * std
                x_try += std * rng.standard_normal()
            crossed_dn = sigma is SwitchState.UP and x_try < params.x_down
            crossed_up = sigma is SwitchState.DOWN and x_try > params.x_up
            t_star = None
            if not (crossed_dn or crossed_up) and var_step > 0:
                # Brownian-bridge correction: the path may have touched the
                # wall even though both endpoints are inside
                wall = params.x_down if sigma is SwitchState.UP else params.x_up
                a, b = x - wall, x_try - wall
                if a * b > 0:
                    p_touch = math.exp(-2.0 * a * b / var_step)
                    if rng.random() < p_touch:
                        crossed_dn = sigma is SwitchState.UP
                        crossed_up = not crossed_dn
                        t_star = 0.5 * rem
            if crossed_dn:
                if t_star is None:
                    t_det = _crossing_time(x, params.x_down, m, params.tau)
                    t_star = min(t_det, rem) if t_det > 0 else \
                        rem * (x - params.x_down) / (x - x_try)
                x, sigma = params.x_down, SwitchState.DOWN
                rem -= min(max(t_star, 0.0), rem)
            elif crossed_up:
                if t_star is None:
                    if x < params.x_up:
                        t_det = _crossing_time(x, params.x_up, m, params.tau)
                        t_star = min(t_det, rem) if t_det > 0 else \
                            rem * (params.x_up - x) / (x_try - x)
                    else:
                        t_star = 0.0
                x, sigma = params.x_up, SwitchState.UP
                rem -= min(max(t_star, 0.0), rem)
                cycles += 1
                last = t_now + (dt - rem)
            else:
                x = x_try
                rem = 0.0
            if rem <= 0:
                break
        return DeviceState(x, sigma, cycles, last, t_now + dt)

    # soft model: decide the flip from the pre-step position, then move
    eligible = (sigma is SwitchState.UP and x < params.x_down) or (
        sigma is SwitchState.DOWN and x > params.x_up)
    flip = eligible and (rng.random() < -math.expm1(-params.rate * dt))
    m = params.target(sigma)
    decay = math.exp(-dt / params.tau)
    x_new = x * decay + m * (1 - decay)
    if params.kappa > 0:
        x_new += _ou_increment_std(params, dt) * rng.standard_normal()
    if sigma is SwitchState.UP and x > params.x_up and x_new <= params.x_up:
        cycles += 1
        last = t_now + dt
    if flip:
        sigma = SwitchState.DOWN if sigma is SwitchState.UP else SwitchState.UP
    return DeviceState(x_new, sigma, cycles, last, t_now + dt)


def _step_generator(seed: int, step: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed),
                                                counter=[0, 0, 0, step]))


def simulate_ensemble(params: TclParams, n_devices: int, t_end: float, dt: float,
                      seed: int = 0, snapshot_times=(), x0=None, sigma0=None,
                      record_cycle_times: bool = False,
                      record_excursions: bool = False) -> EnsembleTrace:
    """Evolve an ensemble and record on-fraction, snapshots and cycle counts.

    ``x0``/``sigma0`` set the initial condition (scalars broadcast; default
    all devices at (x_up, Up)).  Snapshots are taken at the step boundaries
    nearest to the requested times.  ``record_excursions`` collects the
    durations of below-band excursions (crossing x_down downward in Up until
    crossing it upward again in Down); exact crossing times are only
    available in the diffusionless soft model.
    """
    if n_devices < 1:
        raise ValueError("need at least one device")
    if dt > params.tau / 100.0 + 1e-15:
        raise ValueError("dt exceeds dt_max = tau/100")
    if record_excursions and (params.is_hard or params.kappa != 0):
        raise ValueError("excursion recording requires the diffusionless soft model")
    n_steps = int(round(t_end / dt))
    x = np.empty(n_devices, dtype=float)
    x[:] = params.x_up if x0 is None else x0
    up = np.ones(n_devices, dtype=bool)
    if sigma0 is not None:
        if isinstance(sigma0, SwitchState):
            up[:] = sigma0 is SwitchState.UP
        else:
            up[:] = np.asarray(sigma0, dtype=bool)
    cycles = np.zeros(n_devices, dtype=np.int64)
    last_completion = np.full(n_devices, np.nan)
    durations: list[np.ndarray] = []
    duration_starts: list[np.ndarray] = []
    below_since = np.full(n_devices, np.nan)
    excursions: list[np.ndarray] = []
    excursion_start_list: list[np.ndarray] = []
    # time the device entered its eligibility region (diffusionless soft path)
    eligible_since = np.full(n_devices, np.nan)
    if not params.is_hard and params.kappa == 0:
        init_eligible = np.where(up, x < params.x_down, x > params.x_up)
        eligible_since[init_eligible] = 0.0
        below_since[up & (x < params.x_down)] = 0.0

    snap_steps = {int(round(ts / dt)): ts for ts in snapshot_times}
    snapshots: list[Snapshot] = []
    times = np.arange(n_steps + 1) * dt
    onf = np.empty(n_steps + 1)
    onf[0] = up.mean()
    if 0 in snap_steps:
        snapshots.append(Snapshot(0.0, x.copy(), up.copy(), cycles.copy()))

    p_flip = -math.expm1(-params.rate * dt) if not params.is_hard else None
    tau = params.tau

    def complete(idx, t_complete):
        cycles[idx] += 1
        if record_cycle_times:
            prev = last_completion[idx]
            have = ~np.isnan(prev)
            if np.any(have):
                durations.append(t_complete[have] - prev[have])
                duration_starts.append(prev[have])
        last_completion[idx] = t_complete

    for k in range(1, n_steps + 1):
        gen = _step_generator(seed, k)
        if params.kappa > 0:
            z_main = gen.standard_normal(n_devices)
            z_rem = gen.standard_normal(n_devices) if params.is_hard else None
            u_bridge = gen.random((2, n_devices)) if params.is_hard else None
        else:
            z_main = z_rem = u_bridge = None
        u_flip = u_fire = u_time = None
        if not params.is_hard:
            if params.kappa > 0:
                u_flip = gen.random(n_devices)
            else:
                u_fire = gen.random(n_devices)
                u_time = gen.random(n_devices)
        t_step0 = (k - 1) * dt

        if params.is_hard:
            rem = np.full(n_devices, dt)
            z_pass = z_main
            for ipass in range(3):
                active = rem > 0
                if not np.any(active):
                    break
                m = np.where(up, params.x_minus, params.x_plus)
                decay = np.exp(-rem / tau)
                x_try = np.where(active, x * decay + m * (1 - decay), x)
                if params.kappa > 0 and z_pass is not None:
                    var_step = params.kappa * tau * (-np.expm1(-2.0 * rem / tau))
                    x_try = x_try + np.where(active, np.sqrt(var_step) * z_pass, 0.0)
                cross_dn = active & up & (x_try < params.x_down)
                cross_up = active & ~up & (x_try > params.x_up)
                bridge_t = np.full(n_devices, np.nan)
                if params.kappa > 0 and ipass < 2:
                    # Brownian-bridge wall touch for paths ending inside
                    inside = active & ~cross_dn & ~cross_up
                    wall = np.where(up, params.x_down, params.x_up)
                    a = x - wall
                    b = x_try - wall
                    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                        p_touch = np.where(inside & (a * b > 0) & (var_step > 0),
                                           np.exp(-2.0 * a * b / var_step), 0.0)
                    touched = inside & (u_bridge[ipass] < p_touch)
                    bridge_t[touched] = 0.5 * rem[touched]
                    cross_dn |= touched & up
                    cross_up |= touched & ~up
                plain = active & ~cross_dn & ~cross_up
                x[plain] = x_try[plain]
                rem[plain] = 0.0
                if np.any(cross_dn):
                    idx = np.where(cross_dn)[0]
                    t_det = _crossing_time(x[idx], params.x_down, params.x_minus, tau)
                    with np.errstate(invalid="ignore", divide="ignore"):
                        interp = rem[idx] * (x[idx] - params.x_down) / (x[idx] - x_try[idx])
                    t_star = np.where((t_det > 0) & (t_det <= rem[idx]), t_det, interp)
                    t_star = np.where(np.isnan(bridge_t[idx]), t_star, bridge_t[idx])
                    rem[idx] -= np.clip(t_star, 0.0, rem[idx])
                    x[idx] = params.x_down
                    up[idx] = False
                if np.any(cross_up):
                    idx = np.where(cross_up)[0]
                    below = x[idx] < params.x_up
                    safe_x = np.where(below, x[idx], params.x_down)
                    t_det = _crossing_time(safe_x, params.x_up, params.x_plus, tau)
                    with np.errstate(invalid="ignore", divide="ignore"):
                        interp = rem[idx] * (params.x_up - x[idx]) / (x_try[idx] - x[idx])
                    t_star = np.where(below & (t_det > 0) & (t_det <= rem[idx]),
                                      t_det, np.where(below, interp, 0.0))
                    t_star = np.where(np.isnan(bridge_t[idx]), t_star, bridge_t[idx])
                    t_star = np.clip(t_star, 0.0, rem[idx])
                    rem[idx] -= t_star
                    complete(idx, t_step0 + (dt - rem[idx]))
                    x[idx] = params.x_up
                    up[idx] = True
                z_pass = z_rem  # fresh noise for the post-crossing remainder
            if np.any(rem > 0):
                raise RuntimeError("more than three threshold events in one dt; "
                                   "reduce the time step")
        elif params.kappa > 0:
            eligible = np.where(up, x < params.x_down, x > params.x_up)
            flip = eligible & (u_flip < p_flip)
            m = np.where(up, params.x_minus, params.x_plus)
            decay = math.exp(-dt / tau)
            x_new = x * decay + m * (1 - decay) + _ou_increment_std(params, dt) * z_main
            crossed = up & (x > params.x_up) & (x_new <= params.x_up)
            if np.any(crossed):
                idx = np.where(crossed)[0]
                frac = (x[idx] - params.x_up) / (x[idx] - x_new[idx])
                complete(idx, t_step0 + np.clip(frac, 0.0, 1.0) * dt)
            x = x_new
            up = np.where(flip, ~up, up)
        else:
            # diffusionless soft model: flows and event times are exact, so
            # the Poisson clock runs on the true within-step exposure and the
            # flip moment is drawn from the truncated exponential
            xm, xd, xu, xp = (params.x_minus, params.x_down,
                              params.x_up, params.x_plus)
            t_b = t_step0 + dt
            m = np.where(up, xm, xp)
            decay = math.exp(-dt / tau)
            x_flow = x * decay + m * (1 - decay)

            onset_up = up & (x > xd) & (x_flow <= xd)
            if np.any(onset_up):
                idx = np.where(onset_up)[0]
                t_on = t_step0 + _crossing_time(x[idx], xd, xm, tau)
                eligible_since[idx] = t_on
                if record_excursions:
                    below_since[idx] = t_on
            onset_dn = ~up & (x < xu) & (x_flow >= xu)
            if np.any(onset_dn):
                idx = np.where(onset_dn)[0]
                eligible_since[idx] = t_step0 + tau * np.log((xp - x[idx]) / (xp - xu))

            with np.errstate(invalid="ignore"):
                s0 = np.maximum(eligible_since, t_step0)
                exposure = np.where(np.isnan(eligible_since), 0.0,
                                    np.maximum(t_b - s0, 0.0))
            fire = (exposure > 0) & (u_fire < -np.expm1(-params.rate * exposure))

            x_new = x_flow.copy()
            if np.any(fire):
                idx = np.where(fire)[0]
                span = t_b - s0[idx]
                t_flip = s0[idx] - np.log1p(
                    u_time[idx] * np.expm1(-params.rate * span)) / params.rate
                was_onset = onset_up[idx] | onset_dn[idx]
                thr = np.where(up[idx], xd, xu)
                x_s0 = np.where(was_onset, thr, x[idx])
                d_old = np.exp(-(t_flip - s0[idx]) / tau)
                x_flip = x_s0 * d_old + m[idx] * (1 - d_old)
                m_new = np.where(up[idx], xp, xm)  # target after the flip
                d_new = np.exp(-(t_b - t_flip) / tau)
                x_new[idx] = x_flip * d_new + m_new * (1 - d_new)

                # Down -> Up flips may recross x_up before the step ends
                fired_dn = ~up[idx] & (x_new[idx] <= xu)
                if np.any(fired_dn):
                    sub = idx[fired_dn]
                    t_c = t_flip[fired_dn] + tau * np.log(
                        np.maximum(x_flip[fired_dn] - xm, xu - xm) / (xu - xm))
                    complete(sub, t_c)
                # Up -> Down flips may leave the below-band region immediately
                if record_excursions:
                    fired_up = up[idx] & (x_new[idx] >= xd)
                    if np.any(fired_up):
                        sub = idx[fired_up]
                        t_c = t_flip[fired_up] + tau * np.log(
                            (xp - x_flip[fired_up]) / (xp - xd))
                        have = ~np.isnan(below_since[sub])
                        if np.any(have):
                            excursions.append(t_c[have] - below_since[sub][have])
                            excursion_start_list.append(below_since[sub][have])
                        below_since[sub] = np.nan
                eligible_since[idx] = np.nan

            not_fired = ~fire
            crossed = not_fired & up & (x > xu) & (x_flow <= xu)
            if np.any(crossed):
                idx = np.where(crossed)[0]
                complete(idx, t_step0 + _crossing_time(x[idx], xu, xm, tau))
            if record_excursions:
                left = not_fired & ~up & (x < xd) & (x_flow >= xd)
                if np.any(left):
                    idx = np.where(left)[0]
                    t_c = t_step0 + tau * np.log((xp - x[idx]) / (xp - xd))
                    have = ~np.isnan(below_since[idx])
                    if np.any(have):
                        excursions.append(t_c[have] - below_since[idx][have])
                        excursion_start_list.append(below_since[idx][have])
                    below_since[idx] = np.nan
            x = x_new
            up = np.where(fire, ~up, up)

        onf[k] = up.mean()
        if k in snap_steps:
            snapshots.append(Snapshot(times[k], x.copy(), up.copy(), cycles.copy()))

    def gather(parts, enabled):
        if not enabled:
            return None
        return np.concatenate(parts) if parts else np.empty(0)

    return EnsembleTrace(times=times, on_fraction=onf, snapshots=snapshots,
                         cycles=cycles,
                         cycle_durations=gather(durations, record_cycle_times),
                         cycle_starts=gather(duration_starts, record_cycle_times),
                         excursion_durations=gather(excursions, record_excursions),
                         excursion_starts=gather(excursion_start_list, record_excursions),
                         seed=seed, dt=dt, params=params)


def empirical_distribution(x: np.ndarray, sigma_up: np.ndarray, grid: Grid1D) -> FieldPair:
    """Histogram of device positions per state, normalized to unit total mass."""
    if len(x) == 0:
        raise ValueError("empty snapshot")
    up_counts, _ = np.histogram(x[sigma_up], bins=grid.faces)
    dn_counts, _ = np.histogram(x[~sigma_up], bins=grid.faces)
    norm = grid.dx * len(x)
    return FieldPair(up_counts / norm, dn_counts / norm, grid)


@dataclass
class FluxStats:
    t: float
    n: np.ndarray
    pmf: np.ndarray
    mean_omega: float
    var_omega: float


def flux_statistics(trace: EnsembleTrace, t: float | None = None) -> FluxStats:
    """Distribution of completed cycle counts at time t (default: run end)."""
    if t is None or abs(t - trace.times[-1]) <= 1e-9 * max(1.0, abs(t)):
        t_eff, counts = trace.times[-1], trace.cycles
    else:
        snap = trace.snapshot_at(t)
        t_eff, counts = snap.time, snap.cycles
    n_max = int(counts.max())
    pmf = np.bincount(counts, minlength=n_max + 1) / len(counts)
    omega = counts / t_eff
    return FluxStats(t=t_eff, n=np.arange(n_max + 1), pmf=pmf,
                     mean_omega=float(omega.mean()), var_omega=float(omega.var()))
