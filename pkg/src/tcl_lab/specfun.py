"""Special functions and generic numerics used across the lab.

Confluent (1F1) and Gauss (2F1) hypergeometric functions for the parameter
ranges the model needs, rectangle root searches certified by the argument
principle, numerical inverse Laplace transforms, and Gaussian integrals.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc

__all__ = [
    "PrecisionLossError",
    "RootCountError",
    "RootSearchRegion",
    "kummer_m",
    "gauss_2f1_neg",
    "find_roots",
    "winding_number",
    "inverse_laplace",
    "gaussian_integral",
]

_EPS = np.finfo(float).eps


class PrecisionLossError(RuntimeError):
    """Raised when a series/quadrature cannot reach the requested accuracy."""


class RootCountError(RuntimeError):
    """Raised when located roots disagree with the argument-principle count."""


# ---------------------------------------------------------------------------
# Confluent hypergeometric function 1F1(a; b; z), complex a, real b, z >= 0
# ---------------------------------------------------------------------------

def _neumaier_series(a, b, z, max_terms):
    """Compensated power series for 1F1.  Returns (sum, max magnitude, n)."""
    s = 1.0 + 0.0j
    comp = 0.0 + 0.0j
    term = 1.0 + 0.0j
    max_mag = 1.0
    n = 0
    while n < max_terms:
        term = term * (a + n) / (b + n) * z / (n + 1)
        t = s + term
        if abs(s) >= abs(term):
            comp += (s - t) + term
        else:
            comp += (term - t) + s
        s = t
        mag = abs(term)
        if mag > max_mag:
            max_mag = mag
        if abs(s) > max_mag:
            max_mag = abs(s)
        n += 1
        if mag <= 1e-17 * abs(s) and n > 4:
            break
    else:
        raise PrecisionLossError(f"1F1 series did not converge in {max_terms} terms")
    return s + comp, max_mag, n


def _kummer_extended(a, b, z):
    """Arbitrary-precision evaluation (series, via the e^z * 1F1(b-a;b;-z)
    transformation for large z so the working precision absorbs the
    alternating-series cancellation)."""
    import mpmath as mp

    dps = 40 + int(0.45 * z)
    with mp.workdps(dps):
        if z > 30.0:
            aa, zz = mp.mpc(b) - mp.mpc(a), -mp.mpf(z)
        else:
            aa, zz = mp.mpc(a), mp.mpf(z)
        s = mp.mpc(1)
        term = mp.mpc(1)
        n = 0
        while True:
            term = term * (aa + n) / (b + n) * zz / (n + 1)
            s += term
            n += 1
            if abs(term) < mp.mpf(10) ** (-dps) * (1 + abs(s)) and n > 4:
                break
            if n > 100000:
                raise PrecisionLossError("extended-precision 1F1 did not converge")
        if z > 30.0:
            s *= mp.e ** mp.mpf(z)
        return complex(s)


def kummer_m(a, b: float, z: float, tol: float = 1e-10, max_terms: int = 4000) -> complex:
    """Kummer's confluent hypergeometric function 1F1(a; b; z).

    ``a`` may be complex, ``b`` must not be a non-positive integer, ``z >= 0``.
    Relative accuracy is tracked internally; if the double-precision series
    cannot certify ``tol`` the evaluation is redone in extended precision.
    """
    if z < 0:
        raise ValueError("kummer_m requires z >= 0")
    if b <= 0 and float(b).is_integer():
        raise ValueError("b must not be a non-positive integer")
    a = complex(a)
    # terminating case: a is a non-positive integer -> finite (exact) sum
    if a.imag == 0.0 and a.real <= 0.0 and a.real.is_integer():
        m = int(-a.real)
        s = 1.0
        term = 1.0
        for n in range(m):
            term = term * (a.real + n) / (b + n) * z / (n + 1)
            s += term
        return complex(s)
    if z == 0.0:
        return 1.0 + 0.0j
    value, max_mag, n = _neumaier_series(a, b, z, max_terms)
    if abs(value) == 0.0:
        return _kummer_extended(a, b, z)
    est = _EPS * max_mag / abs(value) * math.sqrt(n)
    if est > tol:
        return _kummer_extended(a, b, z)
    return value


# ---------------------------------------------------------------------------
# Gauss hypergeometric function 2F1(a, c; c+1; -w), w > 0
# ---------------------------------------------------------------------------

def gauss_2f1_neg(a, c, w: float, tol: float = 1e-12, max_terms: int = 200000) -> complex:
    """2F1(a, c; c+1; -w) for w > 0, complex c (and a), c not 0, -1, -2, ...

    Direct series for small w, Pfaff-transformed series otherwise; both are
    entire in ``a`` and meromorphic in ``c`` with simple poles at the
    non-positive integers, which realizes the analytic continuation in c.
    """
    if w < 0:
        raise ValueError("gauss_2f1_neg requires w >= 0")
    a = complex(a)
    c = complex(c)
    if abs(c - round(c.real)) < 1e-13 and c.real <= 0 and abs(c.imag) < 1e-13:
        raise PrecisionLossError(f"2F1(a, c; c+1; -w) has a pole at c={c}")
    if w == 0.0:
        return 1.0 + 0.0j
    if w <= 0.5:
        # sum_n (a)_n * c/(c+n) * (-w)^n / n!
        s = 1.0 + 0.0j
        poch = 1.0 + 0.0j
        for n in range(1, max_terms):
            poch = poch * (a + n - 1) * (-w) / n
            term = poch * c / (c + n)
            s += term
            if abs(term) <= tol * 0.01 * max(1.0, abs(s)) and n > 4:
                return s
        raise PrecisionLossError("2F1 direct series did not converge")
    # Pfaff: 2F1(a, c; c+1; -w) = (1+w)^(-a) * 2F1(a, 1; c+1; w/(1+w))
    x = w / (1.0 + w)
    s = 1.0 + 0.0j
    term = 1.0 + 0.0j
    for n in range(max_terms):
        term = term * (a + n) / (c + 1 + n) * x
        s += term
        if abs(term) <= tol * 0.01 * max(1.0, abs(s)) and n > 4:
            return (1.0 + w) ** (-a) * s
    raise PrecisionLossError("2F1 Pfaff series did not converge")


# ---------------------------------------------------------------------------
# Root finding on a rectangle, certified by the argument principle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RootSearchRegion:
    """Rectangle in the complex plane with scan/polish settings."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    n_re: int = 81
    n_im: int = 81
    newton_tol: float = 1e-10
    max_newton: int = 60

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("degenerate root-search region")

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (
            self.re_min - margin <= z.real <= self.re_max + margin
            and self.im_min - margin <= z.imag <= self.im_max + margin
        )


def _boundary_points(region: RootSearchRegion, n_per_side: int) -> np.ndarray:
    a, b = region.re_min, region.re_max
    c, d = region.im_min, region.im_max
    bottom = np.linspace(a, b, n_per_side, endpoint=False) + 1j * c
    right = b + 1j * np.linspace(c, d, n_per_side, endpoint=False)
    top = np.linspace(b, a, n_per_side, endpoint=False) + 1j * d
    left = a + 1j * np.linspace(d, c, n_per_side, endpoint=False)
    pts = np.concatenate([bottom, right, top, left, [a + 1j * c]])
    return pts


def winding_number(f, region: RootSearchRegion, n_per_side: int = 256,
                   max_depth: int = 48) -> int:
    """Winding number of f around the region boundary (zeros minus poles).

    Phase steps are refined recursively until each is below pi/2; a function
    value numerically indistinguishable from zero on the boundary is an error.
    """
    pts = _boundary_points(region, n_per_side)
    vals = np.array([f(z) for z in pts])
    if not np.all(np.isfinite(vals)):
        raise RootCountError("f is not finite on the search-region boundary "
                             "(pole on the boundary?)")
    scale = np.median(np.abs(vals))
    if scale == 0 or np.any(np.abs(vals) < 1e-13 * scale):
        raise RootCountError("f vanishes on the search-region boundary")

    def phase_step(z0, v0, z1, v1, depth):
        d = cmath.phase(v1 / v0)
        if abs(d) <= math.pi / 2:
            return d
        if depth >= max_depth:
            raise RootCountError("boundary phase tracking failed (root on boundary?)")
        zm = 0.5 * (z0 + z1)
        vm = f(zm)
        if vm == 0:
            raise RootCountError("f vanishes on the search-region boundary")
        return phase_step(z0, v0, zm, vm, depth + 1) + phase_step(zm, vm, z1, v1, depth + 1)

    total = 0.0
    for i in range(len(pts) - 1):
        total += phase_step(pts[i], vals[i], pts[i + 1], vals[i + 1], 0)
    w = total / (2 * math.pi)
    wi = int(round(w))
    if abs(w - wi) > 0.25:
        raise RootCountError(f"non-integer winding number {w:.3f}")
    return wi


def _newton_polish(f, z0: complex, region: RootSearchRegion):
    """Damped Newton iteration with a complex central-difference derivative.

    Iterates escaping a modestly expanded copy of the region are abandoned
    (they belong to roots outside, or to divergence).
    """
    dre = region.re_max - region.re_min
    dim = region.im_max - region.im_min
    margin = 0.25 * max(dre, dim)

    def value(z):
        v = f(z)
        return v if np.isfinite(v) else None

    z = z0
    fz = value(z)
    if fz is None:
        return None
    for _ in range(region.max_newton):
        if not region.contains(z, margin=margin):
            return None
        h = 1e-7 * (1.0 + abs(z))
        fp, fm = value(z + h), value(z - h)
        if fp is None or fm is None:
            return None
        df = (fp - fm) / (2 * h)
        if df == 0:
            return None
        step = fz / df
        lam = 1.0
        while lam > 1e-6:
            z_new = z - lam * step
            f_new = value(z_new)
            if f_new is not None and abs(f_new) < abs(fz):
                break
            lam *= 0.5
        else:
            return z if abs(step) < region.newton_tol * (1 + abs(z)) else None
        z, fz = z_new, f_new
        if abs(lam * step) < region.newton_tol * (1 + abs(z)):
            return z
    return None


def _pole_seeds(f, pole: complex, order: int, scale_len: float):
    """Candidate roots near a pole of f from its local Laurent behavior.

    For f ~ A/(z-p)^m + O(1) with regular part ~ -f_inf (the use case is
    resolvent-style functions f = 1 - G), roots near p solve
    (z-p)^m = -A/f_reg; seeding all m-th branches catches root clusters that
    hug the pole too tightly for the grid scan to separate.
    """
    seeds = []
    for delta in (1e-3 * scale_len, 1e-2 * scale_len):
        probe = pole + 1j * delta
        try:
            amp = f(probe) * (probe - pole) ** order
        except Exception:
            continue
        if not np.isfinite(amp):
            continue
        radius = (-amp) ** (1.0 / order)
        for k in range(order):
            rot = cmath.exp(2j * math.pi * k / order)
            seeds.append(pole + radius * rot)
    return seeds


def find_roots(f, region: RootSearchRegion, known_poles=()):
    """All roots of a meromorphic f inside the region.

    ``known_poles`` is a sequence of (location, order) for the poles of f
    inside the region.  The search runs on the deflated function
    h(z) = f(z) * prod ((z - p)/L)^order, which is analytic, so the boundary
    winding number must equal the number of located roots exactly; any
    disagreement raises RootCountError.  Returns (root, residual) pairs
    sorted by (Re, Im); residuals are |h(root)| relative to the scan scale.
    """
    diag = abs(complex(region.re_max - region.re_min, region.im_max - region.im_min))
    half = diag / 2.0
    poles = [(complex(p), int(m)) for p, m in known_poles
             if region.contains(complex(p), margin=0.05 * diag)]

    def h(z):
        try:
            val = f(z)
        except (PrecisionLossError, OverflowError):
            return complex(np.nan, np.nan)
        for p, m in poles:
            val *= ((z - p) / half) ** m
        return val

    re = np.linspace(region.re_min, region.re_max, region.n_re)
    im = np.linspace(region.im_min, region.im_max, region.n_im)
    zz = re[None, :] + 1j * im[:, None]
    vals = np.empty(zz.shape, dtype=complex)
    for i in range(zz.shape[0]):
        for j in range(zz.shape[1]):
            vals[i, j] = h(zz[i, j])

    # a cell is a candidate when both the real and imaginary parts cross zero
    # somewhere among its corners (isoline crossing heuristic); exact zeros on
    # scan nodes count as crossings
    cell_re = np.zeros((zz.shape[0] - 1, zz.shape[1] - 1), dtype=bool)
    cell_im = np.zeros_like(cell_re)
    with np.errstate(invalid="ignore"):
        for comp, out in ((vals.real, cell_re), (vals.imag, cell_im)):
            corner = np.stack([comp[:-1, :-1], comp[:-1, 1:], comp[1:, :-1],
                               comp[1:, 1:]])
            lo, hi = corner.min(axis=0), corner.max(axis=0)
            out[:] = (lo <= 0) & (hi >= 0) & ((lo < 0) | (hi > 0)) \
                & np.all(np.isfinite(corner), axis=0)
    starts = [0.5 * (zz[i, j] + zz[i + 1, j + 1]) for i, j in np.argwhere(cell_re & cell_im)]
    for p, m in poles:
        starts.extend(_pole_seeds(f, p, m, scale_len=min(1.0, 0.1 * half)))

    roots = []
    for z0 in starts:
        z = _newton_polish(h, z0, region)
        if z is None:
            continue
        if not region.contains(z, margin=1e-9 * diag):
            continue
        if all(abs(z - r) > 1e-7 * diag for r in roots):
            roots.append(z)

    finite = np.abs(vals[np.isfinite(vals)])
    scale = float(np.median(finite)) if len(finite) else 1.0
    bad = [z for z in roots if abs(h(z)) > max(1e-8 * scale, 1e3 * region.newton_tol * scale)]
    if bad:
        raise PrecisionLossError(f"Newton polish left large residuals at {bad}")

    w = winding_number(h, region)
    if w != len(roots):
        raise RootCountError(
            f"argument principle counts {w} roots after pole deflation, "
            f"but {len(roots)} were located"
        )
    roots.sort(key=lambda z: (z.real, z.imag))
    return [(z, abs(h(z)) / scale) for z in roots]


# ---------------------------------------------------------------------------
# Numerical inverse Laplace transform
# ---------------------------------------------------------------------------

def _talbot(F, t: float, n: int) -> float:
    """Fixed Talbot contour with n nodes (midpoint rule)."""
    r = 2.0 * n / (5.0 * t)
    theta = (np.arange(1, n) * math.pi) / n
    cot = 1.0 / np.tan(theta)
    s = r * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    total = 0.5 * F(r) * math.exp(r * t)
    for k in range(n - 1):
        total += (np.exp(t * s[k]) * F(s[k]) * (1.0 + 1j * sigma[k])).real
    return (r / n) * float(np.real(total))


def _bromwich_durbin(F, t: float, tol: float, k_base: int = 256, m_euler: int = 40) -> float:
    """Durbin Fourier-series inversion with Euler acceleration of the tail.

    The series half-period is set to t itself so the Fourier factors become
    (-1)^k and the tail is an alternating series, the regime where binomial
    (Euler) acceleration converges fast.
    """
    big_a = max(18.4, -math.log(max(tol, 1e-300)) + 4.0)
    a = big_a / (2.0 * t)
    k = np.arange(1, k_base + m_euler + 1)
    terms = np.array([((-1) ** int(kk)) * F(a + 1j * kk * math.pi / t).real for kk in k])
    partial = 0.5 * F(a + 0j).real + np.cumsum(terms)
    tail = partial[k_base - 1 : k_base + m_euler]
    weights = np.array([math.comb(m_euler, j) for j in range(m_euler + 1)], dtype=float)
    accel = float(np.dot(weights, tail) / 2.0 ** m_euler)
    return math.exp(big_a / 2.0) / t * accel


def inverse_laplace(F, t: float, method: str = "talbot", tol: float = 1e-10,
                    poles=None, residues=None, n_start: int = 64,
                    n_max: int = 8192) -> float:
    """Invert a Laplace transform F(s) at time t > 0.

    methods:
      ``talbot``       - fixed Talbot contour, node count doubled until two
                         successive results agree to ``tol``;
      ``bromwich_sum`` - Durbin trapezoid/Fourier series with Euler
                         acceleration along a vertical Bromwich line;
      ``residue_sum``  - sum of supplied residues: f(t) = sum res_j e^(s_j t).
    """
    if t <= 0:
        raise ValueError("inverse_laplace requires t > 0")
    if method == "talbot":
        # In double precision the endpoint term e^(2n/5) amplifies roundoff,
        # so the node ladder stays modest and stops at first agreement.
        ladder = [n for n in (16, 24, 32, 48, 64, 80) if n >= min(n_start, 16)]
        prev = _talbot(F, t, ladder[0])
        best, best_gap = prev, math.inf
        for n in ladder[1:]:
            cur = _talbot(F, t, n)
            gap = abs(cur - prev)
            if gap <= tol * max(1.0, abs(cur)):
                return cur
            if gap < best_gap:
                best, best_gap = cur, gap
            prev = cur
        if best_gap <= 1e4 * tol * max(1.0, abs(best)):
            return best
        raise PrecisionLossError("Talbot inversion did not reach requested accuracy")
    if method == "bromwich_sum":
        r1 = _bromwich_durbin(F, t, tol, k_base=256)
        r2 = _bromwich_durbin(F, t, tol, k_base=512)
        if abs(r2 - r1) > 100 * tol * max(1.0, abs(r2)):
            r3 = _bromwich_durbin(F, t, tol, k_base=2048)
            if abs(r3 - r2) > 100 * tol * max(1.0, abs(r3)):
                raise PrecisionLossError("Bromwich series did not settle")
            return r3
        return r2
    if method == "residue_sum":
        if poles is None or residues is None:
            raise ValueError("residue_sum requires poles and residues")
        total = sum(res * cmath.exp(complex(p) * t) for p, res in zip(poles, residues))
        if abs(total.imag) > 1e-6 * (1.0 + abs(total.real)):
            raise PrecisionLossError(
                f"residue sum has a non-negligible imaginary part {total.imag:.3e} "
                "(conjugate poles missing?)"
            )
        return total.real
    raise ValueError(f"unknown inversion method {method!r}")


# ---------------------------------------------------------------------------
# Gaussian integrals
# ---------------------------------------------------------------------------

def gaussian_integral(x_a: float, x_b: float, center: float, width_sq: float) -> float:
    """integral of exp(-(x - center)^2 / width_sq) over [x_a, x_b].

    For the stationary-state kernels ``width_sq = 2 * kappa * tau``.  Uses
    erf/erfc pairings that avoid cancellation for far-tail intervals.
    """
    if width_sq <= 0:
        raise ValueError("width_sq must be positive")
    s = math.sqrt(width_sq)
    za = (x_a - center) / s
    zb = (x_b - center) / s
    pref = 0.5 * math.sqrt(math.pi) * s
    if za >= 0 and zb >= 0:
        diff = erfc(min(za, zb)) - erfc(max(za, zb))
        return pref * math.copysign(diff, zb - za)
    if za <= 0 and zb <= 0:
        diff = erfc(min(-za, -zb)) - erfc(max(-za, -zb))
        return pref * math.copysign(diff, zb - za)
    return pref * (erf(zb) - erf(za))
