"""Lagrangian statistics of a single cycling device (diffusionless soft model,
plus the first-passage route for the hard model).

One cycle, referenced to the point (x_up, Up), consists of the deterministic
deadband traversal of duration t_dc plus two out-of-band excursions whose
durations have densities p_out(.; alpha) and p_out(.; beta).  Their Laplace
transforms F_s determine everything else: the cycle-time transform
G_s = e^(-s t_dc) F_s(alpha) F_s(beta), the cycle-count law P(n|t), the pole
spectrum of 1/(1 - G_s), the large-deviation rate of the empirical flux
omega = n/t, and the return probability at the reference point.

F_s is evaluated along two routes: direct time-domain quadrature where the
integral converges (Re s > -r) and a hypergeometric continuation

    F_s(g) = r (1+g)^(r tau) / (r+s) * 2F1(r tau + 1, (r+s) tau; (r+s) tau + 1; -g)

valid everywhere except (r+s) tau in {0, -1, -2, ...}, obtained from the
defining integral by the substitution u = e^(-t/tau).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from tcl_lab.core import Grid1D, SwitchState, TclParams, geometry
from tcl_lab.fp import first_passage_density
from tcl_lab.specfun import (
    PrecisionLossError,
    RootSearchRegion,
    gauss_2f1_neg,
    inverse_laplace,
)

__all__ = [
    "FluxLaw",
    "CycleLaw",
    "HardFirstPassage",
    "out_time_forward",
    "out_time_inverse",
    "p_out",
    "laplace_f",
    "laplace_g",
    "mean_cycle_time",
    "p_out_n",
    "cycles_given_time",
    "ld_function",
    "cycle_time_poles",
    "return_probability",
    "laplace_mode",
    "hard_first_passage",
]


# ---------------------------------------------------------------------------
# Out-of-band excursions
# ---------------------------------------------------------------------------

def out_time_forward(t, gamma: float, tau: float):
    """Total out-of-band time as a function of the Poisson switch time t."""
    t = np.asarray(t, dtype=float)
    return t + tau * np.log1p(gamma * (1.0 - np.exp(-t / tau)))


def out_time_inverse(t_out, gamma: float, tau: float):
    """Switch time t recovered from the out-of-band time (exact inverse)."""
    t_out = np.asarray(t_out, dtype=float)
    return t_out + tau * (np.log1p(gamma * np.exp(-t_out / tau)) - math.log1p(gamma))


def p_out(t_out, gamma: float, r: float, tau: float):
    """Density of the out-of-band time for one transition.

    r/(1 + gamma e^(-T/tau)) * ((1+gamma)/(e^(T/tau) + gamma))^(r tau),
    evaluated in log space so large T underflows gracefully.
    """
    t_arr = np.asarray(t_out, dtype=float)
    scaled = t_arr / tau
    log_pow = r * tau * (math.log1p(gamma)
                         - np.logaddexp(scaled, math.log(gamma) if gamma > 0 else -np.inf))
    dens = r * np.exp(log_pow) / (1.0 + gamma * np.exp(-scaled))
    return np.where(t_arr < 0, 0.0, dens)


# ---------------------------------------------------------------------------
# Laplace transforms
# ---------------------------------------------------------------------------

def _log_p_out(t: float, gamma: float, r: float, tau: float) -> float:
    scaled = t / tau
    log_pow = r * tau * (math.log1p(gamma)
                         - np.logaddexp(scaled, math.log(gamma) if gamma > 0 else -np.inf))
    return math.log(r) + log_pow - math.log1p(gamma * math.exp(-scaled))


def _laplace_f_quadrature(s: complex, gamma, r, tau) -> complex:
    if (r + s.real) * tau <= 0.05:
        raise ValueError("quadrature path requires Re((r+s) tau) > 0.05")

    def integrand(t, part):
        # exponent combined in log space: the density decays like e^(-rt)
        # while |e^(-st)| may grow, and only the product is representable
        expo = -s * t + _log_p_out(t, gamma, r, tau)
        if expo.real < -745.0:
            return 0.0
        val = cmath.exp(expo)
        return val.real if part == 0 else val.imag

    kwargs = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    re, _ = quad(integrand, 0, np.inf, args=(0,), **kwargs)
    im, _ = quad(integrand, 0, np.inf, args=(1,), **kwargs)
    return complex(re, im)


def _laplace_f_hyper(s: complex, gamma, r, tau) -> complex:
    c = (r + s) * tau
    try:
        h = gauss_2f1_neg(r * tau + 1.0, c, gamma)
    except PrecisionLossError as exc:
        raise PrecisionLossError(
            f"F_s continuation pole at (r+s)*tau = {c}") from exc
    return r * (1.0 + gamma) ** (r * tau) / (r + s) * h


def laplace_f(s, gamma: float, r: float, tau: float, method: str = "auto") -> complex:
    """Laplace transform F_s of the out-of-band time density.

    ``auto`` integrates directly when the integral converges comfortably
    (Re s > -r + 0.25/tau) and otherwise continues via the hypergeometric
    representation; the two agree to ~1e-9 on the overlap.
    """
    s = complex(s)
    if method == "auto":
        method = "quadrature" if s.real > -r + 0.25 / tau else "hypergeometric"
    if method == "quadrature":
        return _laplace_f_quadrature(s, gamma, r, tau)
    if method == "hypergeometric":
        return _laplace_f_hyper(s, gamma, r, tau)
    raise ValueError(f"unknown method {method!r}")


def laplace_g(s, params: TclParams, method: str = "auto") -> complex:
    """Laplace transform of the full cycle-time density.

    G_s = e^(-s t_dc) F_s(alpha) F_s(beta); the prefactor equals
    (alpha beta)^(tau s) through t_dc = -tau ln(alpha beta).
    """
    g = geometry(params)
    s = complex(s)
    fa = laplace_f(s, g.alpha, params.rate, params.tau, method)
    fb = laplace_f(s, g.beta, params.rate, params.tau, method)
    return cmath.exp(-s * g.t_dc) * fa * fb


def _dlog_g(s: float, params: TclParams, h: float = 1e-6) -> float:
    """d ln G / ds on the real axis by central differences.

    The step shrinks near the continuation pole at s = -r so the probes stay
    on the analytic side.
    """
    gap = s + params.rate
    if gap > 0:
        h = min(h, gap / 16.0)
    gp = laplace_g(s + h, params, method="hypergeometric").real
    gm = laplace_g(s - h, params, method="hypergeometric").real
    return (math.log(gp) - math.log(gm)) / (2 * h)


def mean_cycle_time(params: TclParams) -> float:
    """Mean duration of one full cycle, -dG/ds at s = 0."""
    return -_dlog_g(0.0, params)


# ---------------------------------------------------------------------------
# Cycle-count law
# ---------------------------------------------------------------------------

def p_out_n(t: float, n: int, params: TclParams, tol: float = 1e-9) -> float:
    """Density of the total out-of-band time after n completed cycles.

    Numerical inversion of (F_s(alpha) F_s(beta))^n.  The contour is shifted
    to the real saddle of the integrand first (exponential tilting), which
    keeps the inversion relative-accurate far into the tails where the plain
    double-precision contour sum would drown in roundoff.  The n = 0 case is
    a delta at t = 0 and is carried symbolically by the callers.
    """
    if n < 1:
        raise ValueError("p_out_n is defined for n >= 1; n = 0 is a delta")
    if t <= 1e-12:
        return 0.0
    g = geometry(params)
    r, tau = params.rate, params.tau

    def dlog_pair(s):
        gap = s + r
        h = min(1e-6, gap / 16.0) if gap > 0 else 1e-6
        val = []
        for ss in (s + h, s - h):
            fa = _laplace_f_hyper(complex(ss), g.alpha, r, tau)
            fb = _laplace_f_hyper(complex(ss), g.beta, r, tau)
            val.append(math.log((fa * fb).real))
        return (val[0] - val[1]) / (2 * h)

    s_lo = -r + max(1e-4, 1e-3 * r)
    try:
        # saddle of e^{st} (Fa Fb)^n: n dln(FaFb)/ds = -t
        shift = _solve_saddle(dlog_pair, n / t, s_lo, min(1.0, 100.0 / t))
    except RuntimeError:
        shift = 0.0
    if shift * t > 600.0:  # value below e^-600: call it zero
        return 0.0

    def tilted(s):
        fa = _laplace_f_hyper(complex(s) + shift, g.alpha, r, tau)
        fb = _laplace_f_hyper(complex(s) + shift, g.beta, r, tau)
        return (fa * fb) ** n

    val = inverse_laplace(tilted, t, method="talbot", tol=tol)
    return max(val, 0.0) * math.exp(shift * t)


@dataclass
class FluxLaw:
    """Normalized cycle-count distribution at a fixed observation time."""

    t: float
    n: np.ndarray
    pmf: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.dot(self.n, self.pmf))

    @property
    def variance(self) -> float:
        m = self.mean
        return float(np.dot((self.n - m) ** 2, self.pmf))


def cycles_given_time(t: float, params: TclParams, n_max: int | None = None) -> FluxLaw:
    """P(n|t): completion-time weights P_out;n(t - n t_dc), renormalized.

    Weights vanish for n > t/t_dc (a cycle costs at least t_dc); for
    t < t_dc only the delta term survives, so P(0|t) = 1.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    t_dc = geometry(params).t_dc
    top = int(math.floor(t / t_dc + 1e-12))
    if n_max is not None:
        top = min(top, n_max)
    if top < 1:
        return FluxLaw(t=t, n=np.array([0]), pmf=np.array([1.0]))
    weights = np.zeros(top + 1)
    for n in range(1, top + 1):
        weights[n] = max(p_out_n(t - n * t_dc, n, params), 0.0)
    total = weights.sum()
    if total <= 0:
        raise RuntimeError("cycle-count weights vanished; time too close to a multiple of t_dc")
    return FluxLaw(t=t, n=np.arange(top + 1), pmf=weights / total)


# ---------------------------------------------------------------------------
# Large deviations of the flux
# ---------------------------------------------------------------------------

def _solve_saddle(dlog_g, omega: float, s_lo: float, s_hi: float,
                  tol: float = 1e-11, max_iter: int = 200) -> float:
    """Solve dlog_g(s) = -1/omega on (s_lo, s_hi), Newton with a bracket."""
    target = -1.0 / omega
    f_lo = dlog_g(s_lo) - target
    f_hi = dlog_g(s_hi) - target
    while f_hi < 0:  # expand to the right until the target is bracketed
        s_hi = s_hi + max(1.0, s_hi - s_lo)
        f_hi = dlog_g(s_hi) - target
        if s_hi > 1e6:
            raise RuntimeError(f"saddle point not bracketed for omega={omega}")
    if f_lo > 0:
        raise RuntimeError(f"omega={omega} outside the admissible flux range")
    s = 0.5 * (s_lo + s_hi)
    for _ in range(max_iter):
        f = dlog_g(s) - target
        if f > 0:
            s_hi = s
        else:
            s_lo = s
        h = 1e-6 * max(1.0, abs(s))
        curv = (dlog_g(s + h) - dlog_g(s - h)) / (2 * h)
        s_new = s - f / curv if curv > 0 else 0.5 * (s_lo + s_hi)
        if not (s_lo < s_new < s_hi):
            s_new = 0.5 * (s_lo + s_hi)
        if abs(s_new - s) < tol * max(1.0, abs(s)):
            return s_new
        s = s_new
    raise RuntimeError("saddle iteration did not converge")


def ld_function(omega: float, params: TclParams) -> tuple[float, float]:
    """Large-deviation rate S(omega) of the empirical flux and its saddle s*.

    Solves 1 = -omega dlnG/ds at s = s* on the real axis and returns
    S = -s* - omega ln G(s*).  Admissible omega lie in (0, 1/t_dc).
    """
    g = geometry(params)
    if not 0 < omega < 1.0 / g.t_dc:
        raise ValueError(f"omega must lie in (0, 1/t_dc) = (0, {1.0 / g.t_dc:.6g})")
    s_lo = -params.rate + max(1e-4, 1e-3 * params.rate)
    s_star = _solve_saddle(lambda s: _dlog_g(s, params), omega, s_lo, 1.0)
    g_val = laplace_g(s_star, params, method="hypergeometric").real
    return -s_star - omega * math.log(g_val), s_star


# ---------------------------------------------------------------------------
# Poles of 1/(1 - G_s) and the return probability
# ---------------------------------------------------------------------------

def cycle_time_poles(params: TclParams, region: RootSearchRegion | None = None):
    """Roots of 1 - G_s = 0 in the s plane (the relaxation spectrum, s = -lambda).

    G has double poles at s = -r - k/tau from both F factors; they are
    declared to the argument-principle bookkeeping.
    """
    if region is None:
        region = RootSearchRegion(-3.8, 0.35, -40.0, 40.0, n_re=61, n_im=241)
    r, tau = params.rate, params.tau

    def f(s):
        return 1.0 - laplace_g(s, params, method="hypergeometric")

    known = []
    k = 0
    while True:
        p = -r - k / tau
        if p < region.re_min:
            break
        if region.contains(complex(p)):
            known.append((complex(p), 2))
        k += 1
    return [z for z, _ in find_roots_safe(f, region, known)]


def find_roots_safe(f, region, known_poles):
    """find_roots with one automatic rescan at doubled resolution."""
    from tcl_lab.specfun import RootCountError, find_roots

    try:
        return find_roots(f, region, known_poles)
    except RootCountError:
        dense = RootSearchRegion(region.re_min, region.re_max, region.im_min,
                                 region.im_max, n_re=2 * region.n_re - 1,
                                 n_im=2 * region.n_im - 1,
                                 newton_tol=region.newton_tol,
                                 max_newton=region.max_newton)
        return find_roots(f, dense, known_poles)


def _g_derivative(s: complex, params: TclParams, h: float = 1e-6) -> complex:
    gp = laplace_g(s + h, params, method="hypergeometric")
    gm = laplace_g(s - h, params, method="hypergeometric")
    return (gp - gm) / (2 * h)


def return_probability(t: float, params: TclParams, method: str = "sum",
                       poles=None) -> float:
    """Density of being back at the reference point (x_up, Up) at time t.

    The n = 0 delta at t = 0 is excluded; the smooth part is
    u^-1 sum_n P_out;n(t - n t_dc), computed either term by term (``sum``)
    or as a residue sum over the roots of G_s = 1 (``residues``).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    g = geometry(params)
    if method == "sum":
        top = int(math.floor(t / g.t_dc + 1e-12))
        total = 0.0
        for n in range(1, top + 1):
            arg = t - n * g.t_dc
            if arg > 1e-12:
                total += p_out_n(arg, n, params)
        return total / g.u
    if method == "residues":
        if poles is None:
            poles = cycle_time_poles(params)
        total = 0.0 + 0.0j
        for s_j in poles:
            total += cmath.exp(s_j * t) / (-_g_derivative(s_j, params))
        if abs(total.imag) > 1e-6 * (1 + abs(total.real)):
            raise PrecisionLossError("residue sum not real; pole set incomplete")
        return total.real / g.u
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Laplace-domain single-passage modes (diffusionless)
# ---------------------------------------------------------------------------

def _passage_pieces(params: TclParams):
    xm, xd, xu, xp = params.x_minus, params.x_down, params.x_up, params.x_plus
    tau = params.tau
    t_plus = tau * math.log((xu - xm) / (xd - xm))

    def a(x):  # cooling time from x_up to x in the Up state
        return tau * math.log((xu - xm) / (x - xm))

    def heat_time(x_from, x_to):  # heating time in the Down state
        return tau * math.log((xp - x_from) / (xp - x_to))

    return xm, xd, xu, xp, tau, t_plus, a, heat_time


def laplace_mode(s, x: float, sigma: SwitchState, params: TclParams) -> complex:
    """xi_s(x, sigma): Laplace transform over arrival times of the single-cycle
    passage density from (x_up, Up), weighted by 1/|dx/dt|.  Diffusionless.
    """
    if params.kappa != 0:
        raise ValueError("laplace_mode is defined for the diffusionless model")
    if params.is_hard:
        raise ValueError("laplace_mode requires a finite switching rate")
    xm, xd, xu, xp, tau, t_plus, a, heat = _passage_pieces(params)
    r = params.rate
    s = complex(s)
    if not (xm < x < xp):
        raise ValueError(f"state x={x} unreachable in the diffusionless model")

    def switch_weight(x_s):  # Poisson switch density mapped to position
        return r * (tau / (x_s - xm)) * math.exp(-r * (a(x_s) - t_plus))

    if sigma is SwitchState.UP:
        speed = (x - xm) / tau
        if xd < x <= xu:
            return cmath.exp(-s * a(x)) / speed
        if x <= xd:
            return cmath.exp(-s * a(x)) * math.exp(-r * (a(x) - t_plus)) / speed
        # above the band: switched down at x_s, heated to x_u > x, cooling past x.
        # exp(-s(a + b + c)) factorizes since b(x_s, x_u) = tau ln(xp-x_s) - tau ln(xp-x_u)

        def outer(x_s):
            val = switch_weight(x_s) * cmath.exp(-s * (a(x_s) + tau * math.log(xp - x_s)))
            return val

        def inner(x_u):
            surv = math.exp(-r * heat(xu, x_u))
            cool = tau * math.log((x_u - xm) / (x - xm))
            val = r * (tau / (xp - x_u)) * surv * cmath.exp(
                -s * (cool - tau * math.log(xp - x_u)))
            return val

        i_outer = _complex_quad(outer, xm, xd)
        i_inner = _complex_quad(inner, x, xp)
        return i_outer * i_inner / speed

    speed = (xp - x) / tau
    hi = min(x, xd)

    def integrand(x_s):
        val = switch_weight(x_s) * cmath.exp(-s * (a(x_s) + heat(x_s, x)))
        return val

    total = _complex_quad(integrand, xm, hi)
    if x > xu:
        total *= math.exp(-r * heat(xu, x))
    return total / speed


def _complex_quad(f, lo, hi):
    kwargs = dict(epsabs=1e-12, epsrel=1e-11, limit=300)
    re, _ = quad(lambda v: f(v).real, lo, hi, **kwargs)
    im, _ = quad(lambda v: f(v).imag, lo, hi, **kwargs)
    return complex(re, im)


# ---------------------------------------------------------------------------
# Hard-model first passage (Appendix-style route through the FP solver)
# ---------------------------------------------------------------------------

@dataclass
class HardFirstPassage:
    """First-passage densities of both levels and their Laplace data."""

    times: np.ndarray
    p_up: np.ndarray          # Up level: injected at x_up, absorbed at x_down
    p_down: np.ndarray        # Down level: injected at x_down, absorbed at x_up
    params: TclParams

    def mass(self, which: str = "up") -> float:
        dens = self.p_up if which == "up" else self.p_down
        return float(np.trapezoid(dens, self.times))

    def mean_passage_time(self, which: str = "up") -> float:
        dens = self.p_up if which == "up" else self.p_down
        m = np.trapezoid(dens, self.times)
        return float(np.trapezoid(self.times * dens, self.times) / m)

    def laplace(self, s: float, which: str = "up") -> float:
        dens = self.p_up if which == "up" else self.p_down
        return float(np.trapezoid(np.exp(-s * self.times) * dens, self.times))

    def laplace_cycle(self, s: float) -> float:
        """G_s of the full cycle: product of the two level transforms."""
        return self.laplace(s, "up") * self.laplace(s, "down")

    def cycle_time_density(self) -> tuple[np.ndarray, np.ndarray]:
        """Convolution P_up * P_down on the common grid."""
        dt = self.times[1] - self.times[0]
        conv = np.convolve(self.p_up, self.p_down)[: 2 * len(self.times) - 1] * dt
        t = np.arange(len(conv)) * dt
        return t, conv

    def tail_rate(self) -> float:
        """Asymptotic decay rate of the slower of the two passage densities."""
        t, d = self.times, np.maximum(self.p_up, self.p_down)
        peak = np.argmax(d)
        sel = (d > 1e-8 * d[peak]) & (np.arange(len(t)) > peak + (len(t) - peak) // 3)
        if sel.sum() < 10:
            raise RuntimeError("too little tail data to estimate the decay rate")
        return -float(np.polyfit(t[sel], np.log(d[sel]), 1)[0])

    def ld_function(self, omega: float) -> tuple[float, float]:
        """LD rate of the hard-model flux via the measured G_s.

        The numeric transform only converges for s above minus the slowest
        passage decay rate, which bounds the admissible saddle from below.
        """
        if not omega > 0:
            raise ValueError("omega must be positive")

        def dlog(s):
            h = 1e-5 * max(1.0, abs(s))
            return (math.log(self.laplace_cycle(s + h))
                    - math.log(self.laplace_cycle(s - h))) / (2 * h)

        s_lo = -0.8 * self.tail_rate()
        s_star = _solve_saddle(dlog, omega, s_lo=s_lo, s_hi=1.0)
        g_val = self.laplace_cycle(s_star)
        return -s_star - omega * math.log(g_val), s_star


def hard_first_passage(params: TclParams, grid: Grid1D | None = None,
                       dt: float = 0.002, t_max: float | None = None) -> HardFirstPassage:
    """First-passage densities of both levels from the FP solver.

    Each level starts as a delta at its injection point and is evolved with
    the absorbing-wall operator; the recorded wall flux is the passage-time
    density.  Runs at dt and dt/2 are Richardson-extrapolated to cancel the
    O(dt) backward-Euler bias.
    """
    if params.kappa <= 0:
        raise ValueError("hard_first_passage requires kappa > 0")
    if grid is None:
        dx = 0.9 * min(math.sqrt(params.kappa * params.tau) / 4.0,
                       (params.x_up - params.x_down) / 100.0)
        grid = Grid1D.for_params(params, dx_target=dx)
    if t_max is None:
        t_max = 15.0 * params.tau
    n_steps = int(round(t_max / dt))

    def run(step):
        t_up, d_up = first_passage_density(params, grid, SwitchState.UP,
                                           dt=step, n_steps=int(round(t_max / step)))
        t_dn, d_dn = first_passage_density(params, grid, SwitchState.DOWN,
                                           dt=step, n_steps=int(round(t_max / step)))
        return t_up, d_up, d_dn

    t_full, up_full, dn_full = run(dt)
    t_half, up_half, dn_half = run(dt / 2)
    up = 2.0 * up_half[::2] - up_full
    dn = 2.0 * dn_half[::2] - dn_full
    return HardFirstPassage(times=t_full, p_up=np.clip(up, 0.0, None),
                            p_down=np.clip(dn, 0.0, None), params=params)


# ---------------------------------------------------------------------------
# Convenience bundle
# ---------------------------------------------------------------------------

class CycleLaw:
    """Cycle-time transforms, poles and LD data for one parameter set."""

    def __init__(self, params: TclParams):
        if params.is_hard:
            raise ValueError("CycleLaw describes the finite-rate model")
        self.params = params
        self.geom = geometry(params)
        self._poles = None

    def f_alpha(self, s, method="auto"):
        return laplace_f(s, self.geom.alpha, self.params.rate, self.params.tau, method)

    def f_beta(self, s, method="auto"):
        return laplace_f(s, self.geom.beta, self.params.rate, self.params.tau, method)

    def g(self, s, method="auto"):
        return laplace_g(s, self.params, method)

    def poles(self, region=None):
        if self._poles is None or region is not None:
            self._poles = cycle_time_poles(self.params, region)
        return self._poles

    def mean_cycle_time(self):
        return mean_cycle_time(self.params)

    def ld(self, omega):
        return ld_function(omega, self.params)

    def ld_samples(self, omegas):
        return [(w, *ld_function(w, self.params)) for w in omegas]
