"""Cross-validation acceptance suite.

Every headline result is computed along at least two independent routes
(closed form vs discrete solver vs Monte Carlo vs transform machinery) and
compared at a fixed tolerance.  Each criterion returns a list of CheckResult
rows; `run` prints one pass/fail line per criterion and the CLI renders the
full measured-vs-target table.

Canonical parameters: the symmetric geometry (-2, -1, 1, 2) with tau = 1,
kappa = 0.1 for the hard-model checks and kappa = 0.01 for the regime sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad

from tcl_lab.core import (
    FieldPair,
    Grid1D,
    SwitchState,
    TclParams,
    deadband_cycle_time,
    geometry,
)
from tcl_lab import cycles as cyc
from tcl_lab import fp
from tcl_lab import mc
from tcl_lab import spectrum as spec
from tcl_lab.specfun import RootSearchRegion, kummer_m
from tcl_lab.steady import stationary_hard

__all__ = ["CheckResult", "AcceptanceSuite", "format_table", "run_all", "CRITERIA"]


@dataclass
class CheckResult:
    criterion: int
    name: str
    measured: str
    target: str
    passed: bool
    note: str = ""


def _check(criterion, name, measured, target, passed, note="", fmt="{:.6g}"):
    if isinstance(measured, float):
        measured = fmt.format(measured)
    return CheckResult(criterion=criterion, name=name, measured=str(measured),
                       target=target, passed=bool(passed), note=note)


def _project(field: FieldPair, coarse: Grid1D) -> FieldPair:
    """Mass-preserving rebinning of a fine field onto a coarse grid."""
    fine = field.grid
    up, _ = np.histogram(fine.centers, bins=coarse.faces, weights=field.up)
    down, _ = np.histogram(fine.centers, bins=coarse.faces, weights=field.down)
    scale = fine.dx / coarse.dx
    return FieldPair(up * scale, down * scale, coarse)


class AcceptanceSuite:
    """Shared artifacts plus one method per acceptance criterion."""

    def __init__(self, seed: int = 2024):
        self.seed = seed
        self.p_hard = TclParams(-2.0, -1.0, 1.0, 2.0, tau=1.0, kappa=0.1)
        self.t_dc = deadband_cycle_time(self.p_hard)

    def soft(self, rate, kappa=0.0):
        return TclParams(-2.0, -1.0, 1.0, 2.0, tau=1.0, kappa=kappa, rate=rate)

    # -- shared artifacts ---------------------------------------------------

    @cached_property
    def hard_grid(self) -> Grid1D:
        span = (self.p_hard.x_plus - self.p_hard.x_minus
                + 2 * Grid1D.padding(self.p_hard))
        return Grid1D.for_params(self.p_hard, dx_target=span / 4000)

    @cached_property
    def hard_exact(self):
        return stationary_hard(self.p_hard, self.hard_grid)

    @cached_property
    def hard_operator(self):
        return fp.build_hard_operator(self.p_hard, self.hard_grid)

    @cached_property
    def hard_fp_stationary(self) -> FieldPair:
        return fp.solve_stationary(self.hard_operator)

    @cached_property
    def hard_eigs(self):
        region = RootSearchRegion(-0.5, 8.0, -8.0, 8.0, n_re=69, n_im=69)
        return spec.hard_eigenvalues(self.p_hard, region)

    @cached_property
    def hard_det_window_max(self) -> float:
        region = RootSearchRegion(-0.5, 8.0, -8.0, 8.0, n_re=35, n_im=35)
        _, _, vals = spec.scan_hard_det(self.p_hard, region)
        return float(np.abs(vals).max())

    def soft_region(self, rate, im=9.0) -> RootSearchRegion:
        # right boundary midway between consecutive continuation poles
        return RootSearchRegion(-0.07, rate + 5.45, -im, im, n_re=61, n_im=121)

    @cached_property
    def lagrangian_trace(self):
        """Long diffusionless run at r = 1: excursions, cycles, count snapshot."""
        p = self.soft(1.0)
        t_count = 10 * self.t_dc
        return mc.simulate_ensemble(
            p, 100_000, 65.0, 0.01, seed=self.seed,
            snapshot_times=[t_count], record_cycle_times=True,
            record_excursions=True)

    @cached_property
    def return_poles(self):
        return cyc.cycle_time_poles(
            self.soft(1.0),
            RootSearchRegion(-3.9, 0.35, -64.0, 64.0, n_re=41, n_im=501))

    # -- criteria -----------------------------------------------------------

    def criterion_1(self):
        """Three-way stationary agreement for the hard model."""
        out = []
        exact, grid = self.hard_exact, self.hard_grid
        l1_fp = self.hard_fp_stationary.l1_distance(exact.field)
        out.append(_check(1, "stationary L1: closed form vs FP solver", l1_fp,
                          "<= 0.02", l1_fp <= 0.02))

        trace = mc.simulate_ensemble(self.p_hard, 100_000, 25.0, 0.01,
                                     seed=self.seed + 1, snapshot_times=[25.0])
        snap = trace.snapshots[0]
        coarse = Grid1D.for_params(self.p_hard, dx_target=0.2)
        emp = mc.empirical_distribution(snap.x, snap.sigma_up, coarse)
        exact_coarse = _project(exact.field, coarse)
        fp_coarse = _project(self.hard_fp_stationary, coarse)
        l1_mc_exact = emp.l1_distance(exact_coarse)
        l1_mc_fp = emp.l1_distance(fp_coarse)
        out.append(_check(1, "stationary L1: closed form vs MC histogram",
                          l1_mc_exact, "<= 0.02", l1_mc_exact <= 0.02))
        out.append(_check(1, "stationary L1: FP solver vs MC histogram",
                          l1_mc_fp, "<= 0.02", l1_mc_fp <= 0.02))

        ju, jd = self.hard_operator.wall_fluxes(
            self.hard_operator.to_vector(self.hard_fp_stationary))
        rel = max(abs(ju - exact.flux), abs(jd - exact.flux)) / exact.flux
        out.append(_check(1, "circulating flux: discrete walls vs closed form",
                          rel, "rel <= 0.01", rel <= 0.01,
                          note=f"J_exact={exact.flux:.6f}"))
        return out

    def criterion_2(self):
        """Hard-model determinant and eigenvalue catalog."""
        out = []
        scale = self.hard_det_window_max
        d0 = abs(spec.hard_det(0.0, self.p_hard)) / scale
        out.append(_check(2, "|det| at the stationary eigenvalue / window max",
                          d0, "<= 1e-8", d0 <= 1e-8))
        d2 = abs(spec.hard_det(2.0 / self.p_hard.tau, self.p_hard)) / scale
        out.append(_check(2, "|det| at the even-integer guess / window max",
                          d2, "> 1e-3", d2 > 1e-3,
                          note="the 2n/tau spectrum guess must be refuted"))
        lams = [e.lam for e in self.hard_eigs
                if -1e-8 <= e.lam.real <= 8.0 and abs(e.lam.imag) <= 8.0]
        out.append(_check(2, "eigenvalues located in the search window",
                          len(lams), ">= 4", len(lams) >= 4,
                          note=", ".join(f"{z:.4f}" for z in lams)))
        nonzero = [z for z in lams if abs(z) > 1e-8]
        paired = all(any(abs(z.conjugate() - w) < 1e-6 for w in nonzero)
                     for z in nonzero)
        out.append(_check(2, "nonzero eigenvalues form conjugate pairs",
                          paired, "true", paired))
        lead = min(nonzero, key=lambda z: z.real)
        ok = lead.real > 0 and abs(lead.imag) > 1e-3
        out.append(_check(2, "leading pair has Re > 0 and Im != 0",
                          f"{lead:.4f}", "complex", ok))
        return out

    def criterion_3(self):
        """Slowest hard eigenvalue against the measured FP relaxation."""
        nonzero = [e.lam for e in self.hard_eigs if abs(e.lam) > 1e-8]
        lam1 = min((z for z in nonzero if z.imag > 0), key=lambda z: z.real)
        grid = Grid1D.for_params(self.p_hard, dx_target=0.01)
        state = FieldPair(np.zeros(grid.n_cells), np.zeros(grid.n_cells), grid)
        state.up[grid.cell_of(0.5)] = 1.0 / grid.dx
        res = fp.hard_evolve(self.p_hard, grid, state, dt=0.0025, n_steps=8000)
        fit = fp.measure_relaxation(res.times, res.on_fraction,
                                    model="oscillation", fit_window=(5.0, 20.0))
        rel_g = abs(fit.gamma - lam1.real) / lam1.real
        rel_w = abs(fit.omega - lam1.imag) / lam1.imag
        return [
            _check(3, "relaxation rate vs Re(lambda_1)", rel_g, "rel <= 0.10",
                   rel_g <= 0.10, note=f"measured {fit.gamma:.4f}, "
                   f"eigenvalue {lam1.real:.4f}"),
            _check(3, "oscillation frequency vs Im(lambda_1)", rel_w,
                   "rel <= 0.10", rel_w <= 0.10,
                   note=f"measured {fit.omega:.4f}, eigenvalue {lam1.imag:.4f}"),
        ]

    def criterion_4(self):
        """Diffusionless spectrum: two transcendental routes must agree."""
        out = []
        for r in (0.5, 1.0, 2.0):
            p = self.soft(r)
            region = self.soft_region(r)
            known = [(complex(r + k / p.tau), 2) for k in range(8)]
            zd = [z for z, _ in cyc.find_roots_safe(
                lambda lam: spec.zero_diff_condition(lam, p), region, known)]
            sp = [e.lam for e in spec.soft_poles(p, region)]
            if len(zd) == len(sp):
                mismatch = max(max(min(abs(z - w) for w in sp) for z in zd),
                               max(min(abs(w - z) for z in zd) for w in sp))
            else:
                mismatch = math.inf
            out.append(_check(4, f"cross-method root agreement (r={r})", mismatch,
                              "<= 1e-6", mismatch <= 1e-6,
                              note=f"{len(zd)} roots per route"))
            has_zero = min(abs(z) for z in sp) < 1e-8
            out.append(_check(4, f"stationary root present (r={r})", has_zero,
                              "true", has_zero))
            if r == 0.5:
                slow = min((z for z in sp if abs(z) > 1e-8), key=lambda z: z.real)
                is_real = abs(slow.imag) < 1e-9
                out.append(_check(4, "slowest nonzero eigenvalue real at r=0.5",
                                  f"{slow:.4f}", "Im = 0", is_real,
                                  note="the real branch only exists below "
                                  "r ~ 0.15 for this geometry (e.g. "
                                  "lambda_1 = 0.241 at r = 0.1)"))
        p4 = self.soft(4.0)
        sp4 = [e.lam for e in spec.soft_poles(p4, self.soft_region(4.0))]
        target_im = 2 * math.pi / self.t_dc
        best = min((abs(abs(z.imag) - target_im) / target_im
                    for z in sp4 if abs(z.imag) > 1e-6), default=math.inf)
        out.append(_check(4, "complex root with |Im| near 2 pi/t_dc at r=4", best,
                          "rel <= 0.15", best <= 0.15,
                          note=f"closest |Im| is {best * 100:.1f}% off; the "
                          "oscillatory branch approaches 2 pi k/t_dc only as "
                          "r -> infinity"))
        return out

    def _regime_run(self, r):
        p = self.soft(r, kappa=0.01)
        grid = Grid1D.for_params(p, dx_target=0.02)
        x = grid.centers
        blob = np.exp(-x**2 / (2 * 0.25**2))
        blob /= grid.dx * blob.sum()
        state = FieldPair(0.7 * blob, 0.3 * blob, grid)
        op = fp.build_soft_operator(p, grid)
        return fp.evolve(op, state, dt=0.01, n_steps=4000)

    def criterion_5(self):
        """Relaxation regimes of the density evolution at kappa = 0.01."""
        out = []
        res = self._regime_run(0.25)
        osc, _ = fp.detect_oscillation(res.times, res.on_fraction,
                                       fit_window=(3.0, 40.0))
        out.append(_check(5, "r=0.25: monotone relaxation", not osc,
                          "no oscillation", not osc))
        tail = fp.measure_relaxation(res.times, res.on_fraction, model="decay",
                                     fit_window=(6.0, 40.0), residual_tol=np.inf)
        rel = abs(tail.gamma - 0.25) / 0.25
        out.append(_check(5, "r=0.25: relaxation rate near r", rel,
                          "rel <= 0.25", rel <= 0.25,
                          note=f"tail rate {tail.gamma:.4f}; the slowest "
                          "spectral pair is 0.691+-0.431i, not r itself"))
        res4 = self._regime_run(4.0)
        osc4, fit4 = fp.detect_oscillation(res4.times, res4.on_fraction,
                                           fit_window=(3.0, 40.0))
        out.append(_check(5, "r=4: oscillatory relaxation", osc4,
                          "oscillation", osc4))
        period = 2 * math.pi / fit4.omega if fit4.omega > 0 else math.inf
        rel_p = abs(period - self.t_dc) / self.t_dc
        out.append(_check(5, "r=4: oscillation period near t_dc", rel_p,
                          "rel <= 0.10", rel_p <= 0.10,
                          note=f"period {period:.4f} vs t_dc {self.t_dc:.4f}; "
                          "Im(lambda_1) = 2.264 at r=4 still sits 21% below "
                          "its r -> infinity limit 2 pi/t_dc"))
        rel_g = abs(fit4.gamma - 4.0) / 4.0
        out.append(_check(5, "r=4: envelope decay rate near r", rel_g,
                          "rel <= 0.35", rel_g <= 0.35,
                          note=f"measured {fit4.gamma:.4f}; the oscillatory "
                          "branch decay Re(lambda_1) = 0.148 shrinks with r "
                          "instead of tracking it"))
        return out

    def criterion_6(self):
        """Small-rate regime: fast intra-state rates and the slow mixing rate."""
        p = self.soft(0.05, kappa=1e-3)
        grid = Grid1D.for_params(p, dx_target=0.0075)
        x = grid.centers
        up0 = np.exp(-(x - (p.x_minus + 0.15))**2 / (2 * 0.15**2))
        dn0 = np.exp(-(x - (p.x_plus - 0.15))**2 / (2 * 0.15**2))
        up0 *= 0.7 / (grid.dx * up0.sum())
        dn0 *= 0.3 / (grid.dx * dn0.sum())
        op = fp.build_soft_operator(p, grid)
        res = fp.evolve(op, FieldPair(up0, dn0, grid), dt=0.0025, n_steps=2400,
                        snapshot_every=4)
        core = np.abs(x - p.x_minus) < 0.55
        times, m1, m2 = [], [], []
        for snap in res.snapshots:
            w = snap.up[core]
            mass = grid.dx * w.sum()
            mu = grid.dx * np.sum(x[core] * w) / mass
            times.append(snap.time)
            m1.append(mu - p.x_minus)
            m2.append(grid.dx * np.sum((x[core] - mu)**2 * w) / mass)
        times = np.array(times)
        f1 = fp.measure_relaxation(times, np.array(m1), model="decay",
                                   fit_window=(0.1, 2.0))
        f2 = fp.measure_relaxation(times, np.array(m2), model="decay",
                                   fit_window=(0.05, 1.2))
        out = []
        r1 = abs(f1.gamma - 1.0)
        out.append(_check(6, "first intra-state rate near 1/tau", f1.gamma,
                          "within 20% of 1", r1 <= 0.20))
        r2 = abs(f2.gamma - 2.0) / 2.0
        out.append(_check(6, "second intra-state rate near 2/tau", f2.gamma,
                          "within 20% of 2", r2 <= 0.20,
                          note="equidistant intra-state ladder; the summary "
                          "quoting a single rate 2/tau picks out this second "
                          "mode (recorded, not enforced)"))
        long_run = fp.evolve(op, FieldPair(up0, dn0, grid), dt=0.02,
                             n_steps=5000)
        slow = fp.measure_relaxation(long_run.times, long_run.on_fraction,
                                     model="decay", fit_window=(10.0, 100.0))
        rel = abs(slow.gamma - p.rate) / p.rate
        out.append(_check(6, "slow mixing rate near r", slow.gamma,
                          "within 25% of 0.05", rel <= 0.25,
                          note="on/off exchange relaxes at the sum of the two "
                          "escape rates, 2r + O(r^2) = 0.108 here, not r"))
        return out

    def criterion_7(self):
        """Lagrangian suite at r = 1, kappa = 0."""
        p = self.soft(1.0)
        g = geometry(p)
        out = []

        norm, _ = quad(lambda T: float(cyc.p_out(T, g.alpha, 1.0, 1.0)), 0,
                       np.inf, epsabs=1e-13, epsrel=1e-12)
        out.append(_check(7, "excursion density normalization", abs(norm - 1.0),
                          "<= 1e-10", abs(norm - 1.0) <= 1e-10, fmt="{:.2e}"))

        trace = self.lagrangian_trace
        sel = trace.excursion_starts <= trace.times[-1] - 15.0
        exc = trace.excursion_durations[sel]
        edges = np.linspace(0.0, 14.0, 141)
        hist, _ = np.histogram(exc, bins=edges, density=True)
        centers = 0.5 * (edges[1:] + edges[:-1])
        dens = cyc.p_out(centers, g.alpha, 1.0, 1.0)
        l1 = float(np.sum(np.abs(hist - dens)) * (edges[1] - edges[0]))
        out.append(_check(7, "MC excursion histogram vs analytic density", l1,
                          "<= 0.01", l1 <= 0.01,
                          note=f"{len(exc)} completed excursions"))

        mean = cyc.mean_cycle_time(p)
        cyc_sel = trace.cycle_starts <= trace.times[-1] - 25.0
        mc_mean = float(trace.cycle_durations[cyc_sel].mean())
        rel = abs(mc_mean - mean) / mean
        out.append(_check(7, "MC mean cycle vs transform derivative", rel,
                          "rel <= 0.01", rel <= 0.01,
                          note=f"MC {mc_mean:.4f}, -dG/ds {mean:.4f}"))

        t_count = 10 * self.t_dc
        law = cyc.cycles_given_time(t_count, p)
        stats = mc.flux_statistics(trace, t_count)
        n_top = max(len(law.pmf), len(stats.pmf))
        a = np.zeros(n_top)
        b = np.zeros(n_top)
        a[:len(law.pmf)] = law.pmf
        b[:len(stats.pmf)] = stats.pmf
        l1_counts = float(np.abs(a - b).sum())
        out.append(_check(7, "count law: completion-density ratio vs MC counts",
                          l1_counts, "<= 0.05", l1_counts <= 0.05,
                          note="the renewal-density ratio sits half a cycle "
                          "above the count distribution at finite t (MC "
                          "matches the direct counting law to ~0.03 here); "
                          "only the exponential rate agrees"))

        omega_bar = 1.0 / mean
        s_at_mean, s_star = cyc.ld_function(omega_bar, p)
        out.append(_check(7, "rate function vanishes at the mean flux",
                          abs(s_at_mean), "<= 1e-8", abs(s_at_mean) <= 1e-8,
                          fmt="{:.2e}"))
        omegas = np.linspace(0.35 * omega_bar, 0.985 / self.t_dc, 50)
        vals = np.array([cyc.ld_function(w, p)[0] for w in omegas])
        convex = bool(np.all(np.diff(vals, 2) > -1e-8) and vals.min() > -1e-10)
        out.append(_check(7, "rate function convex and non-negative", convex,
                          "true", convex))

        t_ld = 40 * self.t_dc
        law_ld = cyc.cycles_given_time(t_ld, p)
        ok_ld = True
        notes = []
        for w_mult in (0.5, 1.0, 1.3):
            n = int(round(w_mult * omega_bar * t_ld))
            emp = -math.log(max(law_ld.pmf[n], 1e-300)) / t_ld
            s_w, _ = cyc.ld_function(n / t_ld, p)
            ok_ld &= abs(emp - s_w) <= 0.1 * s_w + 0.05
            notes.append(f"n={n}: |{emp:.4f}-{s_w:.4f}|")
        out.append(_check(7, "finite-time rate matches the rate function",
                          ok_ld, "within 0.1 S + 0.05", ok_ld,
                          note="; ".join(notes)))
        return out

    def criterion_8(self):
        """Toy instantaneous-escape spectrum."""
        out = []
        r_cr = spec.toy_r_critical(self.t_dc)
        z = r_cr * self.t_dc
        out.append(_check(8, "critical rate product r_cr t_dc", z,
                          "0.5569 +- 1e-4", abs(z - 0.5569) <= 1e-4))
        ident = abs(z * z - 4 * math.exp(-(z + 2)))
        out.append(_check(8, "critical-rate identity residual", ident,
                          "<= 1e-10", ident <= 1e-10, fmt="{:.2e}"))
        out.append(_check(8, "r_cr below 1/t_dc", r_cr,
                          f"< {1 / self.t_dc:.4f}", r_cr < 1.0 / self.t_dc))

        zero_resid = abs((0.0 + 2.0)**2 - 2.0**2)
        out.append(_check(8, "s = 0 root exact", zero_resid, "== 0",
                          zero_resid == 0.0, fmt="{:.1e}"))

        big = spec.toy_real_roots(2.0, self.t_dc, -10.0 / self.t_dc, -1e-9)
        out.append(_check(8, "real nonzero roots at r=2 (above critical)",
                          len(big), "0", len(big) == 0))
        small = spec.toy_real_roots(0.1, self.t_dc, -10.0 / self.t_dc, -1e-9)
        out.append(_check(8, "real nonzero roots at r=0.1 (below critical)",
                          len(small), "1", len(small) == 1,
                          note="the spectral equation has a straddling PAIR "
                          f"below the critical rate: roots at "
                          f"{', '.join(f'{s:.4f}' for s in small)}"))

        region = RootSearchRegion(-3.2, 0.3, -46.0, 46.0, n_re=41, n_im=361)
        toy = spec.toy_spectrum(2.0, self.t_dc, region)
        ss = [(-e.lam) for e in toy.roots if (-e.lam).imag > 0]
        worst = 0.0
        for n in range(10, 14):
            approx = spec.toy_asymptotic_root(n, 2.0, self.t_dc)
            match = min(ss, key=lambda s: abs(s - approx))
            worst = max(worst, abs(match - approx) / abs(approx))
        out.append(_check(8, "large-branch root asymptotics (n >= 10)", worst,
                          "rel <= 0.05", worst <= 0.05))
        return out

    def criterion_9(self):
        """Return probability: term-by-term sum vs residue sum."""
        p = self.soft(1.0)
        out = []
        worst = 0.0
        for mult in (2.2, 3.4, 4.6, 5.8, 7.1, 8.3, 9.6):
            t = mult * self.t_dc
            direct = cyc.return_probability(t, p, method="sum")
            res = cyc.return_probability(t, p, method="residues",
                                         poles=self.return_poles)
            worst = max(worst, abs(res - direct) / abs(direct))
        out.append(_check(9, "direct sum vs residue sum (2..10 t_dc)", worst,
                          "rel <= 1e-5", worst <= 1e-5, fmt="{:.2e}"))

        plateau = 1.0 / (geometry(p).u * cyc.mean_cycle_time(p))
        late = cyc.return_probability(40.0, p, method="residues",
                                      poles=self.return_poles)
        rel = abs(late - plateau) / plateau
        xs = np.linspace(-1.999, 1.999, 4001)
        xi1, xi2 = spec.zero_diff_modes(0.0, p, xs)
        norm = np.trapezoid(xi1.real + xi2.real, xs)
        stat_up = float(np.interp(p.x_up, xs, xi1.real)) / norm
        rel2 = abs(late - stat_up) / stat_up
        out.append(_check(9, "long-time level vs stationary mode",
                          max(rel, rel2), "rel <= 0.01", max(rel, rel2) <= 0.01,
                          note=f"level {late:.6f}, stationary {stat_up:.6f}"))
        return out

    def criterion_10(self):
        """Hard-model first passage through the FP solver."""
        out = []
        fpr_01 = cyc.hard_first_passage(self.p_hard, dt=0.004, t_max=12.0)
        p_small = TclParams(-2.0, -1.0, 1.0, 2.0, tau=1.0, kappa=0.003)
        fpr_small = cyc.hard_first_passage(p_small, dt=0.002, t_max=6.0)
        for label, fpr in (("kappa=0.1", fpr_01), ("kappa=0.003", fpr_small)):
            m = fpr.mass("up")
            out.append(_check(10, f"absorbed mass ({label})", abs(m - 1.0),
                              "<= 1e-3", abs(m - 1.0) <= 1e-3, fmt="{:.2e}"))
        mean = fpr_small.mean_passage_time("up")
        rel = abs(mean - math.log(3.0)) / math.log(3.0)
        out.append(_check(10, "small-kappa mean passage vs deterministic ln 3",
                          rel, "rel <= 0.10", rel <= 0.10,
                          note=f"measured {mean:.4f}"))

        trace = mc.simulate_ensemble(self.p_hard, 4000, 55.0, 0.005,
                                     seed=self.seed + 2, record_cycle_times=True)
        sample = trace.cycle_durations[trace.cycle_starts <= 55.0 - 14.0]
        t_conv, conv = fpr_01.cycle_time_density()
        edges = np.linspace(0.0, 12.0, 61)
        hist, _ = np.histogram(sample, bins=edges, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        model = np.interp(centers, t_conv, conv)
        l1 = float(np.sum(np.abs(hist - model)) * (edges[1] - edges[0]))
        out.append(_check(10, "MC cycle-time histogram vs level convolution",
                          l1, "<= 0.05", l1 <= 0.05,
                          note=f"{len(sample)} cycles"))
        return out

    def criterion_11(self):
        """Special functions against high-precision oracles."""
        import mpmath as mp

        def oracle(a, b, z, dps=200):
            with mp.workdps(dps):
                s = mp.mpc(1)
                term = mp.mpc(1)
                n = 0
                while True:
                    term = term * (mp.mpc(a) + n) / (mp.mpf(b) + n) * mp.mpf(z) / (n + 1)
                    s += term
                    n += 1
                    if abs(term) < mp.mpf(10) ** (-dps + 20) * (1 + abs(s)) and n > 4:
                        return complex(s)

        worst = 0.0
        a_grid = [0.0, -1.0, -2.0, -0.5 + 0.3j, -3.9 + 2.0j, -8.0 + 5.0j,
                  2.5 + 1.0j, -6.0 - 7.0j, 9.0 + 0.5j]
        for a in a_grid:
            for b in (0.5, 1.5):
                for z in (0.0, 0.5, 5.0, 20.0, 45.0, 80.0):
                    ref = oracle(a, b, z)
                    err = abs(kummer_m(a, b, z) - ref) / max(abs(ref), 1e-300)
                    worst = max(worst, err)
        out = [_check(11, "confluent 1F1 vs 200-digit series oracle", worst,
                      "rel <= 1e-10", worst <= 1e-10, fmt="{:.2e}")]

        g = geometry(self.soft(1.0))
        worst_f = 0.0
        for s in (0.4, -0.5 + 2.0j, -0.6 - 1.0j, 1.5 + 5.0j, -0.7 + 0.3j):
            fq = cyc.laplace_f(s, g.alpha, 1.0, 1.0, "quadrature")
            fh = cyc.laplace_f(s, g.alpha, 1.0, 1.0, "hypergeometric")
            worst_f = max(worst_f, abs(fq - fh) / max(1.0, abs(fq)))
        out.append(_check(11, "excursion transform dual-path agreement",
                          worst_f, "<= 1e-9", worst_f <= 1e-9, fmt="{:.2e}"))
        return out

    # -- driver ---------------------------------------------------------------

    def run(self, criteria=None, verbose=True):
        results = []
        chosen = criteria if criteria is not None else sorted(CRITERIA)
        for k in chosen:
            rows = getattr(self, f"criterion_{k}")()
            results.extend(rows)
            if verbose:
                ok = all(r.passed for r in rows)
                print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} "
                      f"({sum(r.passed for r in rows)}/{len(rows)} checks)")
        return results


CRITERIA = tuple(range(1, 12))


def format_table(results) -> str:
    lines = [f"{'crit':>4}  {'status':6}  {'measured':>12}  {'target':>16}  name"]
    for r in results:
        lines.append(f"{r.criterion:>4}  {'pass' if r.passed else 'FAIL':6}  "
                     f"{r.measured:>12}  {r.target:>16}  {r.name}"
                     + (f"  [{r.note}]" if r.note else ""))
    n_fail = sum(not r.passed for r in results)
    lines.append(f"-- {len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)


def run_all(seed: int = 2024, verbose: bool = True):
    suite = AcceptanceSuite(seed=seed)
    results = suite.run(verbose=verbose)
    return results, all(r.passed for r in results)
