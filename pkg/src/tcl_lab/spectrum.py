"""Spectral analysis of the relaxation dynamics.

Three routes to the decay spectrum:

* hard model with diffusion: each state contributes two Kummer-function
  solutions of the interior eigenvalue ODE; absorbing-wall and flux-matching
  conditions give a 4x4 homogeneous system whose zero-determinant condition
  locates the eigenvalues;
* diffusionless soft model: piecewise power-law modes matched across the
  thresholds give a transcendental product condition whose roots coincide
  with the poles of the cycle-time resolvent 1/(1 - G_s) under s = -lambda;
* toy instantaneous-escape model: (s+r)^2 = r^2 e^(-s t_dc), with a critical
  rate below which a pair of real relaxation roots exists.

The determinant is evaluated in a Gaussian-normalized basis (prefactor
exp(-(x - target)^2 / 2 kappa tau) instead of the raw exp(-x^2/2 kappa tau +
x*target/kappa tau), a constant rescaling per state) so all entries stay
O(1) across the search window.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from tcl_lab.core import Grid1D, TclParams, geometry
from tcl_lab.cycles import cycle_time_poles, find_roots_safe
from tcl_lab.specfun import RootSearchRegion, gauss_2f1_neg, kummer_m

__all__ = [
    "Eigenvalue",
    "ModePair",
    "ToySpectrum",
    "hard_basis",
    "hard_matrix",
    "hard_det",
    "hard_eigenvalues",
    "hard_eigenmode",
    "scan_hard_det",
    "zero_diff_modes",
    "zero_diff_condition",
    "soft_poles",
    "toy_spectrum",
    "toy_r_critical",
    "toy_asymptotic_root",
]


@dataclass(frozen=True)
class Eigenvalue:
    lam: complex
    residual: float
    method: str
    index_hint: int | None = None


@dataclass
class ModePair:
    x: np.ndarray
    xi_up: np.ndarray
    xi_down: np.ndarray
    eigenvalue: Eigenvalue
    coeffs: np.ndarray


# ---------------------------------------------------------------------------
# Hard model: Kummer basis and the 4x4 determinant
# ---------------------------------------------------------------------------

def _state_basis(lam: complex, x: float, target: float, params: TclParams):
    """Scaled basis pair and derivatives for one state.

    Returns (xi1, xi2, dxi1, dxi2) with the Gaussian-normalized prefactor
    exp(-(x-target)^2 / (2 kappa tau)).
    """
    kt = params.kappa * params.tau
    q = 2.0 * kt
    u = x - target
    z = u * u / q
    a1 = -lam * params.tau / 2.0
    a2 = a1 + 0.5
    m1 = kummer_m(a1, 0.5, z)
    m2 = kummer_m(a2, 1.5, z)
    m1p = (a1 / 0.5) * kummer_m(a1 + 1.0, 1.5, z)
    m2p = (a2 / 1.5) * kummer_m(a2 + 1.0, 2.5, z)
    pref = math.exp(-z)
    xi1 = pref * m1
    xi2 = pref * u * m2
    # d/dx [pref * M] = pref * (u/kt) * (M' - M) with dz/dx = u/kt
    dxi1 = pref * (u / kt) * (m1p - m1)
    dxi2 = pref * (m2 * (1.0 - u * u / kt) + (u * u / kt) * m2p)
    return xi1, xi2, dxi1, dxi2


def hard_basis(lam, x: float, params: TclParams):
    """The four homogeneous interior solutions (xi_u1, xi_u2, xi_d1, xi_d2).

    Carries the raw Gaussian prefactor exp(-x^2/(2 kappa tau) +
    x*target/(kappa tau)); each state differs from the scaled internal basis
    by the constant exp(target^2/(2 kappa tau)).
    """
    lam = complex(lam)
    q = 2.0 * params.kappa * params.tau
    out = []
    for target in (params.x_minus, params.x_plus):
        xi1, xi2, _, _ = _state_basis(lam, x, target, params)
        scale = math.exp(target * target / q)
        out.extend([scale * xi1, scale * xi2])
    return tuple(out)


def hard_basis_derivative(lam, x: float, params: TclParams):
    """x-derivatives of the four basis functions (raw prefactor scaling)."""
    lam = complex(lam)
    q = 2.0 * params.kappa * params.tau
    out = []
    for target in (params.x_minus, params.x_plus):
        _, _, d1, d2 = _state_basis(lam, x, target, params)
        scale = math.exp(target * target / q)
        out.extend([scale * d1, scale * d2])
    return tuple(out)


def hard_matrix(lam, params: TclParams) -> np.ndarray:
    """Boundary/flux conditions on the four basis coefficients (scaled basis).

    Rows: xi_up(x_down) = 0; xi_down(x_up) = 0; flux matching at x_up
    (kappa xi_up' + ((x_up - x_minus)/tau) xi_up + kappa xi_down' = 0);
    flux matching at x_down (kappa xi_down' + ((x_down - x_plus)/tau) xi_down
    + kappa xi_up' = 0).
    """
    if params.kappa <= 0:
        raise ValueError("the hard spectral problem requires kappa > 0")
    lam = complex(lam)
    k, tau = params.kappa, params.tau
    xd, xu = params.x_down, params.x_up
    u1d, u2d, du1d, du2d = _state_basis(lam, xd, params.x_minus, params)
    u1u, u2u, du1u, du2u = _state_basis(lam, xu, params.x_minus, params)
    d1d, d2d, dd1d, dd2d = _state_basis(lam, xd, params.x_plus, params)
    d1u, d2u, dd1u, dd2u = _state_basis(lam, xu, params.x_plus, params)

    vu = (xu - params.x_minus) / tau
    vd = (xd - params.x_plus) / tau
    return np.array([
        [u1d, u2d, 0.0, 0.0],
        [0.0, 0.0, d1u, d2u],
        [k * du1u + vu * u1u, k * du2u + vu * u2u, k * dd1u, k * dd2u],
        [k * du1d, k * du2d, k * dd1d + vd * d1d, k * dd2d + vd * d2d],
    ], dtype=complex)


def hard_det(lam, params: TclParams) -> complex:
    """Determinant of the boundary-condition matrix in the scaled basis."""
    return complex(np.linalg.det(hard_matrix(lam, params)))


def scan_hard_det(params: TclParams, region: RootSearchRegion):
    """Determinant values on the scan grid (for isoline plots)."""
    re = np.linspace(region.re_min, region.re_max, region.n_re)
    im = np.linspace(region.im_min, region.im_max, region.n_im)
    vals = np.empty((region.n_im, region.n_re), dtype=complex)
    for i, b in enumerate(im):
        for j, a in enumerate(re):
            vals[i, j] = hard_det(complex(a, b), params)
    return re, im, vals


def hard_eigenvalues(params: TclParams, region: RootSearchRegion) -> list[Eigenvalue]:
    """All zeros of det M inside the region, certified and polished."""
    roots = find_roots_safe(lambda z: hard_det(z, params), region, known_poles=())
    out = [Eigenvalue(lam=z, residual=res, method="hard_det", index_hint=i)
           for i, (z, res) in enumerate(roots)]
    return out


def hard_eigenmode(eig: Eigenvalue, params: TclParams, grid: Grid1D) -> ModePair:
    """Mode pair on the deadband from the null vector of the 4x4 system."""
    m = hard_matrix(eig.lam, params)
    _, svals, vh = np.linalg.svd(m)
    if svals[-2] < 1e6 * svals[-1]:
        raise RuntimeError(
            f"degenerate null space at lambda={eig.lam}: singular values {svals}")
    c = vh[-1].conj()
    x = grid.centers
    band = (x >= params.x_down) & (x <= params.x_up)
    xi_up = np.zeros(len(x), dtype=complex)
    xi_dn = np.zeros(len(x), dtype=complex)
    for i in np.where(band)[0]:
        u1, u2, _, _ = _state_basis(eig.lam, x[i], params.x_minus, params)
        d1, d2, _, _ = _state_basis(eig.lam, x[i], params.x_plus, params)
        xi_up[i] = c[0] * u1 + c[1] * u2
        xi_dn[i] = c[2] * d1 + c[3] * d2
    return ModePair(x=x, xi_up=xi_up, xi_down=xi_dn, eigenvalue=eig, coeffs=c)


# ---------------------------------------------------------------------------
# Diffusionless soft model
# ---------------------------------------------------------------------------

def _partial_left_integral(lam: complex, x: float, params: TclParams,
                           method: str = "hypergeometric") -> complex:
    """integral_(x_minus)^x (x_plus - x')^(lam tau) (x' - x_minus)^((r-lam) tau - 1) dx'."""
    xm, xp, r, tau = params.x_minus, params.x_plus, params.rate, params.tau
    c = (r - lam) * tau
    if method == "hypergeometric":
        alpha_x = (x - xm) / (xp - x)
        return ((x - xm) ** c * (xp - xm) ** (lam * tau)
                * ((xp - x) / (xp - xm)) ** (-c)
                * gauss_2f1_neg(r * tau + 1.0, c, alpha_x) / c)
    if method == "quadrature":
        if c.real <= 0.02:
            raise ValueError("quadrature branch requires Re((r - lam) tau) > 0")

        def f(v, part):
            val = (xp - v) ** (lam * tau) * (v - xm) ** (c - 1.0)
            return val.real if part == 0 else val.imag

        kwargs = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
        re, _ = quad(f, xm, x, args=(0,), **kwargs)
        im, _ = quad(f, xm, x, args=(1,), **kwargs)
        return complex(re, im)
    raise ValueError(f"unknown method {method!r}")


def _partial_right_integral(lam: complex, x: float, params: TclParams,
                            method: str = "hypergeometric") -> complex:
    """integral_x^(x_plus) (x' - x_minus)^(lam tau) (x_plus - x')^((r-lam) tau - 1) dx'."""
    xm, xp, r, tau = params.x_minus, params.x_plus, params.rate, params.tau
    c = (r - lam) * tau
    if method == "hypergeometric":
        beta_x = (xp - x) / (x - xm)
        return ((xp - x) ** c * (xp - xm) ** (lam * tau)
                * ((x - xm) / (xp - xm)) ** (-c)
                * gauss_2f1_neg(r * tau + 1.0, c, beta_x) / c)
    if method == "quadrature":
        if c.real <= 0.02:
            raise ValueError("quadrature branch requires Re((r - lam) tau) > 0")

        def f(v, part):
            val = (v - xm) ** (lam * tau) * (xp - v) ** (c - 1.0)
            return val.real if part == 0 else val.imag

        kwargs = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
        re, _ = quad(f, x, xp, args=(0,), **kwargs)
        im, _ = quad(f, x, xp, args=(1,), **kwargs)
        return complex(re, im)
    raise ValueError(f"unknown method {method!r}")


def zero_diff_condition(lam, params: TclParams) -> complex:
    """Spectral residual of the diffusionless model: zero at eigenvalues.

    The continuity product condition reads
        I_-(lam) I_+(lam) = ((x_down - x_minus)(x_plus - x_up))^(r tau) / (r tau)^2,
    normalized here as LHS/RHS - 1 so that lam = 0 is exactly a root (the
    stationary state); lam = r + k/tau are poles of the continued integrals.
    """
    if params.is_hard:
        raise ValueError("zero_diff_condition requires a finite rate")
    lam = complex(lam)
    r, tau = params.rate, params.tau
    i_minus = _partial_left_integral(lam, params.x_down, params)
    i_plus = _partial_right_integral(lam, params.x_up, params)
    rhs = ((params.x_down - params.x_minus) * (params.x_plus - params.x_up)) ** (r * tau) \
        / (r * tau) ** 2
    return i_minus * i_plus / rhs - 1.0


def zero_diff_modes(lam, params: TclParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise mode pair (xi_up, xi_down) of the diffusionless model.

    Power laws inside the deadband, power law plus switching-fed integral
    outside; the normalization fixes the left Up coefficient to one and
    enforces continuity of xi_up at both thresholds and of xi_down at x_up.
    Continuity of xi_down at x_down then holds exactly when lam solves the
    spectral condition.
    """
    if params.is_hard:
        raise ValueError("zero_diff_modes requires a finite rate")
    lam = complex(lam)
    xm, xd, xu, xp = params.x_minus, params.x_down, params.x_up, params.x_plus
    r, tau = params.rate, params.tau
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((x <= xm) | (x >= xp)):
        raise ValueError("modes are defined on the open interval (x_minus, x_plus)")

    c1 = (xd - xm) ** (r * tau)                        # middle Up coefficient
    i_plus_full = _partial_right_integral(lam, xu, params)
    c2p = c1 / (r * tau * i_plus_full)                 # right Down coefficient
    c2 = c2p * (xp - xu) ** (r * tau)                  # middle Down coefficient

    xi1 = np.empty(len(x), dtype=complex)
    xi2 = np.empty(len(x), dtype=complex)
    for i, xi in enumerate(x):
        if xi <= xd:
            xi1[i] = (xi - xm) ** (-1.0 + (r - lam) * tau)
            xi2[i] = (r * tau * (xp - xi) ** (-1.0 - lam * tau)
                      * _partial_left_integral(lam, xi, params))
        elif xi < xu:
            xi1[i] = c1 * (xi - xm) ** (-1.0 - lam * tau)
            xi2[i] = c2 * (xp - xi) ** (-1.0 - lam * tau)
        else:
            xi2[i] = c2p * (xp - xi) ** (-1.0 + (r - lam) * tau)
            xi1[i] = (c2p * r * tau * (xi - xm) ** (-1.0 - lam * tau)
                      * _partial_right_integral(lam, xi, params))
    return xi1, xi2


def soft_poles(params: TclParams, region: RootSearchRegion) -> list[Eigenvalue]:
    """Eigenvalues of the diffusionless model as roots of 1 - G_s, lam = -s.

    ``region`` is given in the lambda plane and mirrored internally.
    """
    s_region = RootSearchRegion(-region.re_max, -region.re_min,
                                -region.im_max, -region.im_min,
                                n_re=region.n_re, n_im=region.n_im,
                                newton_tol=region.newton_tol,
                                max_newton=region.max_newton)
    lams = sorted((-s for s in cycle_time_poles(params, s_region)),
                  key=lambda z: (z.real, abs(z.imag), z.imag))
    return [Eigenvalue(lam=lam, residual=0.0, method="soft_poles", index_hint=i)
            for i, lam in enumerate(lams)]


# ---------------------------------------------------------------------------
# Toy instantaneous-escape model
# ---------------------------------------------------------------------------

@dataclass
class ToySpectrum:
    roots: list[Eigenvalue]
    r_cr: float
    real_nonzero_roots: list[float]   # real roots of the spectral equation, s < 0


def toy_r_critical(t_dc: float, tol: float = 1e-12) -> float:
    """Critical rate: (r_cr t_dc)^2 = 4 exp(-(r_cr t_dc + 2)), by bisection."""
    lo, hi = 1e-12, 2.0

    def h(z):
        return z * z * math.exp(z) - 4.0 * math.exp(-2.0)

    assert h(lo) < 0 < h(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) / t_dc


def toy_asymptotic_root(n: int, r: float, t_dc: float) -> complex:
    """Large-n root estimate: branch n of (s+r)^2 = r^2 e^(-s t_dc)."""
    im = (2 * n + 1) * math.pi / t_dc
    re = -(2.0 / t_dc) * math.log((2 * n + 1) * math.pi / (r * t_dc))
    return complex(re, im)


def _toy_f(s, r, t_dc):
    return (s + r) ** 2 - r * r * cmath.exp(-s * t_dc)


def toy_real_roots(r: float, t_dc: float, lo: float, hi: float) -> list[float]:
    """Real nonzero roots of the toy spectral equation on [lo, hi)."""
    from scipy.optimize import brentq

    xs = np.linspace(lo, hi, 4001)
    vals = np.array([_toy_f(x, r, t_dc).real for x in xs])
    roots = []
    for i in range(len(xs) - 1):
        if vals[i] == 0.0 and abs(xs[i]) > 1e-12:
            roots.append(xs[i])
        elif vals[i] * vals[i + 1] < 0:
            root = brentq(lambda s: _toy_f(s, r, t_dc).real, xs[i], xs[i + 1],
                          xtol=1e-13)
            if abs(root) > 1e-9:
                roots.append(root)
    return roots


def toy_spectrum(r: float, t_dc: float, region: RootSearchRegion) -> ToySpectrum:
    """Roots of (s+r)^2 = r^2 e^(-s t_dc) in the region, plus the real-root data."""
    if r <= 0 or t_dc <= 0:
        raise ValueError("need r > 0 and t_dc > 0")
    roots = find_roots_safe(lambda s: _toy_f(s, r, t_dc), region, known_poles=())
    eigs = [Eigenvalue(lam=-z, residual=res, method="toy", index_hint=i)
            for i, (z, res) in enumerate(roots)]
    real = toy_real_roots(r, t_dc, -10.0 / t_dc, -1e-12)
    return ToySpectrum(roots=eigs, r_cr=toy_r_critical(t_dc),
                       real_nonzero_roots=real)
