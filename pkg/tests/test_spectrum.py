import cmath
import math

import numpy as np
import pytest
from scipy.integrate import quad

from tcl_lab.core import Grid1D, SwitchState, TclParams
from tcl_lab.specfun import RootSearchRegion
from tcl_lab.spectrum import (
    hard_basis,
    hard_basis_derivative,
    hard_det,
    hard_eigenmode,
    hard_eigenvalues,
    hard_matrix,
    soft_poles,
    toy_asymptotic_root,
    toy_r_critical,
    toy_real_roots,
    toy_spectrum,
    zero_diff_condition,
    zero_diff_modes,
)
from tcl_lab.steady import stationary_hard


def _soft(r, kappa=0.0):
    return TclParams(-2.0, -1.0, 1.0, 2.0, tau=1.0, kappa=kappa, rate=r)


def _region_for(r, im=9.0):
    # right boundary midway between consecutive continuation poles r + k/tau
    return RootSearchRegion(-0.07, r + 5.45, -im, im, n_re=61, n_im=121)


@pytest.fixture(scope="module")
def hard_eigs(p1_hard):
    region = RootSearchRegion(-0.5, 8.0, -8.0, 8.0, n_re=69, n_im=69)
    return hard_eigenvalues(p1_hard, region)


class TestHardBasis:
    def test_lambda_zero_first_solution_is_gaussian(self, p1_hard):
        q = 2 * p1_hard.kappa * p1_hard.tau
        for x in (-0.8, 0.1, 0.9):
            xi = hard_basis(0.0, x, p1_hard)[0]
            expect = math.exp(-x * x / q + x * p1_hard.x_minus / (q / 2))
            assert xi == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("lam", [0.35 + 0.6j, 1.2 - 2.0j, 3.0 + 0.0j])
    def test_interior_ode_residual(self, p1_hard, lam):
        # each Up basis function solves kappa xi'' + ((x - x_minus) xi / tau)' + lam xi = 0
        k, tau, xm = p1_hard.kappa, p1_hard.tau, p1_hard.x_minus
        h = 1e-4
        for x in (-0.6, 0.2, 0.8):
            for j in (0, 1):
                f = lambda y: hard_basis(lam, y, p1_hard)[j]
                xi = f(x)
                d1 = (f(x + h) - f(x - h)) / (2 * h)
                d2 = (f(x + h) - 2 * xi + f(x - h)) / h**2
                resid = k * d2 + ((x - xm) / tau) * d1 + xi / tau + lam * xi
                scale = max(abs(k * d2), abs(xi / tau), abs(lam * xi), 1e-30)
                assert abs(resid) / scale < 1e-6

    def test_derivative_matches_finite_difference(self, p1_hard):
        lam = 0.7 + 1.3j
        h = 1e-6
        for x in (-0.5, 0.65):
            exact = hard_basis_derivative(lam, x, p1_hard)
            for j in range(4):
                fd = (hard_basis(lam, x + h, p1_hard)[j]
                      - hard_basis(lam, x - h, p1_hard)[j]) / (2 * h)
                assert abs(exact[j] - fd) < 1e-5 * max(1.0, abs(exact[j]))

    def test_wronskian_nonzero_on_band(self, p1_hard):
        # linear independence across the band: by the Abel identity the
        # Wronskian equals a nonzero constant times exp(-(x-x_minus)^2/(2 k t)).
        # Evaluating the product difference at the far end of the band needs
        # ~20 extra digits, so the constancy check runs in mpmath.
        import mpmath as mp

        lam = mp.mpc(1.0, 2.5)
        q = 2 * p1_hard.kappa * p1_hard.tau
        xm = p1_hard.x_minus

        def scaled_wronskian(x, dps=60):
            with mp.workdps(dps):
                u = mp.mpf(x) - xm
                z = u * u / q
                a1 = -lam / 2
                a2 = a1 + mp.mpf(1) / 2
                m1 = mp.hyp1f1(a1, mp.mpf(1) / 2, z)
                m2 = mp.hyp1f1(a2, mp.mpf(3) / 2, z)
                d1 = (a1 / (mp.mpf(1) / 2)) * mp.hyp1f1(a1 + 1, mp.mpf(3) / 2, z)
                d2 = (a2 / (mp.mpf(3) / 2)) * mp.hyp1f1(a2 + 1, mp.mpf(5) / 2, z)
                kt = p1_hard.kappa * p1_hard.tau
                xi1p = (u / kt) * (d1 - m1)
                xi2p = m2 * (1 - u * u / kt) + (u * u / kt) * d2
                # Wronskian of the prefactor-stripped pair is C e^(+z); undo it
                return complex((m1 * xi2p - (u * m2) * xi1p) * mp.e ** (-z))

        vals = [scaled_wronskian(x) for x in np.linspace(-1.0, 1.0, 9)]
        assert min(abs(v) for v in vals) > 0
        assert max(abs(v / vals[0] - 1.0) for v in vals) < 1e-10
        # the double-precision basis agrees on the numerically benign side
        x0 = -0.5
        b = hard_basis(lam, x0, p1_hard)
        d = hard_basis_derivative(lam, x0, p1_hard)
        w = (b[0] * d[1] - b[1] * d[0]) * math.exp((x0 - xm) ** 2 / q)
        expect = vals[0] * math.exp(2 * xm**2 / q)  # raw-prefactor rescaling
        assert abs(complex(w) / complex(expect) - 1.0) < 1e-8


class TestHardSpectrum:
    def test_det_zero_at_stationary_eigenvalue(self, p1_hard):
        region = RootSearchRegion(-0.5, 8.0, -8.0, 8.0, n_re=35, n_im=35)
        from tcl_lab.spectrum import scan_hard_det

        _, _, vals = scan_hard_det(p1_hard, region)
        window_max = np.abs(vals).max()
        assert abs(hard_det(0.0, p1_hard)) <= 1e-8 * window_max
        # the even-integer guess for the spectrum fails at finite kappa
        assert abs(hard_det(2.0 / p1_hard.tau, p1_hard)) > 1e-3 * window_max

    def test_conjugation_symmetry(self, p1_hard):
        for lam in (0.4 + 2.2j, 1.5 - 3.0j):
            m1 = hard_matrix(lam, p1_hard)
            m2 = hard_matrix(lam.conjugate(), p1_hard)
            assert np.allclose(m2, m1.conj(), rtol=1e-12, atol=0)
            assert hard_det(lam.conjugate(), p1_hard) == pytest.approx(
                hard_det(lam, p1_hard).conjugate(), rel=1e-10)

    def test_eigenvalue_catalog(self, hard_eigs):
        lams = [e.lam for e in hard_eigs]
        assert len(lams) >= 4
        assert min(abs(z) for z in lams) < 1e-8              # stationary root
        nonzero = [z for z in lams if abs(z) > 1e-8]
        assert all(z.real > 0 for z in nonzero)
        assert all(z.real >= -1e-8 for z in lams)
        # conjugate pairing
        for z in nonzero:
            assert any(abs(z.conjugate() - w) < 1e-7 for w in nonzero)
        leading = min(nonzero, key=lambda z: z.real)
        assert abs(leading.imag) > 0.1

    def test_stationary_mode_matches_steady(self, p1_hard, hard_eigs):
        zero = min(hard_eigs, key=lambda e: abs(e.lam))
        grid = Grid1D.for_params(p1_hard, dx_target=0.01)
        mode = hard_eigenmode(zero, p1_hard, grid)
        exact = stationary_hard(p1_hard, grid)
        band = (grid.centers > p1_hard.x_down) & (grid.centers < p1_hard.x_up)
        for xi, ref in ((mode.xi_up[band], exact.field.up[band]),
                        (mode.xi_down[band], exact.field.down[band])):
            num = abs(np.vdot(xi, ref))
            den = np.linalg.norm(xi) * np.linalg.norm(ref)
            assert num / den > 1 - 1e-6

    def test_mode_boundary_conditions(self, p1_hard, hard_eigs):
        from tcl_lab.spectrum import _state_basis

        nonzero = [e for e in hard_eigs if abs(e.lam) > 1e-8 and e.lam.imag > 0]
        eig = min(nonzero, key=lambda e: e.lam.real)
        grid = Grid1D.for_params(p1_hard, dx_target=0.005)
        mode = hard_eigenmode(eig, p1_hard, grid)
        scale = max(np.abs(mode.xi_up).max(), np.abs(mode.xi_down).max())
        c = mode.coeffs
        u1, u2, _, _ = _state_basis(eig.lam, p1_hard.x_down, p1_hard.x_minus, p1_hard)
        d1, d2, _, _ = _state_basis(eig.lam, p1_hard.x_up, p1_hard.x_plus, p1_hard)
        assert abs(c[0] * u1 + c[1] * u2) <= 1e-8 * scale
        assert abs(c[2] * d1 + c[3] * d2) <= 1e-8 * scale


class TestZeroDiff:
    def test_stationarity_root(self):
        for r in (0.5, 1.0, 2.0):
            assert abs(zero_diff_condition(0.0, _soft(r))) < 1e-10

    def test_modes_solve_first_order_system(self):
        # (lam + d/dx (x - target)/tau - switching) xi = coupling, checked by
        # finite differences piecewise away from the thresholds
        p = _soft(1.0)
        lam = 0.52 - 1.5j
        h = 1e-5
        for x0 in (-1.6, 0.3, 1.7):
            xi1 = lambda y: zero_diff_modes(lam, p, [y])[0][0]
            xi2 = lambda y: zero_diff_modes(lam, p, [y])[1][0]
            r_up = p.rate if x0 < p.x_down else 0.0
            r_dn = p.rate if x0 > p.x_up else 0.0
            d1 = (xi1(x0 + h) * (x0 + h - p.x_minus) - xi1(x0 - h) * (x0 - h - p.x_minus)) / (2 * h * p.tau)
            resid1 = lam * xi1(x0) + d1 - r_up * xi1(x0) + 0.0
            d2 = (xi2(x0 + h) * (x0 + h - p.x_plus) - xi2(x0 - h) * (x0 - h - p.x_plus)) / (2 * h * p.tau)
            resid2 = lam * xi2(x0) + d2 - r_dn * xi2(x0) + r_up * xi1(x0)
            # Up gains from Down only above x_up
            resid1 += r_dn * xi2(x0)
            scale = max(abs(lam * xi1(x0)), abs(lam * xi2(x0)), 1e-30)
            assert abs(resid1) / scale < 1e-7
            assert abs(resid2) / scale < 1e-7

    def test_dual_branch_integrals_agree(self):
        from tcl_lab.spectrum import _partial_left_integral, _partial_right_integral

        p = _soft(1.0)
        for lam in (0.3 + 0.4j, 0.1 - 0.2j):
            for x in (-1.2, -1.05):
                a = _partial_left_integral(lam, x, p, "hypergeometric")
                b = _partial_left_integral(lam, x, p, "quadrature")
                assert abs(a - b) < 1e-9 * max(1.0, abs(a))
            for x in (1.05, 1.3):
                a = _partial_right_integral(lam, x, p, "hypergeometric")
                b = _partial_right_integral(lam, x, p, "quadrature")
                assert abs(a - b) < 1e-9 * max(1.0, abs(a))

    def test_middle_interval_stationary_shape(self):
        p = _soft(2.0)
        x = np.array([-0.5, 0.0, 0.75])
        xi1, xi2 = zero_diff_modes(0.0, p, x)
        assert np.allclose(xi1 * (x - p.x_minus), xi1[0] * (x[0] - p.x_minus), rtol=1e-10)
        assert np.allclose(xi2 * (p.x_plus - x), xi2[0] * (p.x_plus - x[0]), rtol=1e-10)

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_cross_method_root_agreement(self, r):
        from tcl_lab.cycles import find_roots_safe

        p = _soft(r)
        region = _region_for(r)
        known = [(complex(r + k / p.tau), 2) for k in range(8)]
        zd = [z for z, _ in find_roots_safe(
            lambda lam: zero_diff_condition(lam, p), region, known)]
        sp = [e.lam for e in soft_poles(p, region)]
        assert len(zd) == len(sp)
        # nearest-neighbor set matching (orderings differ for near-degenerate
        # real parts)
        assert max(min(abs(z - w) for w in sp) for z in zd) < 1e-6
        assert max(min(abs(w - z) for z in zd) for w in sp) < 1e-6
        assert min(abs(z) for z in sp) < 1e-9   # s = 0 always a root

    def test_small_rate_has_real_slowest_eigenvalue(self):
        # the slowest nonzero eigenvalue is real for small enough switching
        # rate (about 2r as r -> 0) and turns into a complex pair beyond a
        # critical rate between 0.1 and 0.2 for this geometry
        eigs = soft_poles(_soft(0.1), _region_for(0.1))
        nonzero = [e.lam for e in eigs if abs(e.lam) > 1e-8]
        slowest = min(nonzero, key=lambda z: z.real)
        assert abs(slowest.imag) < 1e-9
        assert slowest.real == pytest.approx(0.241, rel=0.05)

    def test_large_rate_oscillatory_branch(self):
        eigs = soft_poles(_soft(4.0), _region_for(4.0))
        nonzero = [e.lam for e in eigs if abs(e.lam) > 1e-8]
        slowest = min(nonzero, key=lambda z: z.real)
        assert abs(slowest.imag) > 1.5   # oscillatory leading pair

    def test_pole_not_root_at_lambda_equals_r(self):
        # the continued condition blows up at lam = r (double pole of the
        # continued integrals); the nearby true eigenvalues are found by the
        # deflated search instead
        p = _soft(1.0)
        assert abs(zero_diff_condition(1.0 - 1e-3, p)) > 1e3


class TestToy:
    def test_zero_always_root(self):
        for r in (0.1, 0.25, 2.0):
            assert abs((0.0 + r) ** 2 - r * r) == 0.0

    def test_critical_rate(self, ln9):
        r_cr = toy_r_critical(ln9)
        z = r_cr * ln9
        assert z == pytest.approx(0.5569, abs=1e-4)
        assert z * z == pytest.approx(4 * math.exp(-(z + 2)), abs=1e-10)
        assert r_cr < 1.0 / ln9

    def test_real_root_census(self, ln9):
        # r above critical: no real nonzero roots; below: a straddling pair
        assert toy_real_roots(2.0, ln9, -10.0 / ln9, -1e-9) == []
        roots_small = toy_real_roots(0.1, ln9, -10.0 / ln9, -1e-9)
        assert len(roots_small) == 2
        assert all(z < 0 for z in roots_small)

    def test_spectrum_search_and_conjugation(self, ln9):
        region = RootSearchRegion(-2.4, 0.3, -15.0, 15.0, n_re=41, n_im=241)
        spec = toy_spectrum(2.0, ln9, region)
        lams = [e.lam for e in spec.roots]
        assert any(abs(z) < 1e-9 for z in lams)
        for z in lams:
            assert any(abs(z.conjugate() - w) < 1e-7 for w in lams)

    def test_large_n_asymptotics(self, ln9):
        r = 2.0
        region = RootSearchRegion(-3.2, 0.3, -46.0, 46.0, n_re=41, n_im=361)
        spec = toy_spectrum(r, ln9, region)
        ss = sorted((-e.lam for e in spec.roots if (-e.lam).imag > 0),
                    key=lambda z: z.imag)
        for n in range(10, 14):
            approx = toy_asymptotic_root(n, r, ln9)
            match = min(ss, key=lambda z: abs(z - approx))
            assert abs(match - approx) / abs(approx) < 0.05
