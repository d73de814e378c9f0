"""Fokker-Planck solvers for the soft and hard models.

Space is discretized in flux form on a uniform cell-centered grid.  With
diffusion the face fluxes use the exponentially fitted (Scharfetter-Gummel)
scheme, whose discrete stationary state for a single Ornstein-Uhlenbeck state
is exactly the cell-sampled Gaussian; without diffusion the advection is
first-order upwind.  Switching terms are piecewise-constant in x, located by
cell center.  Hard-model absorbing walls sit on cell faces: the wall flux is
evaluated on the half cell against a zero boundary value and reinjected as a
delta source into the opposite state, which conserves total mass exactly.

Time stepping is backward Euler; the system matrix is an M-matrix, so the
scheme is unconditionally stable and positivity preserving up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import least_squares

from tcl_lab.core import FieldPair, Grid1D, SwitchState, TclParams

__all__ = [
    "FpOperator",
    "EvolveResult",
    "RelaxationFit",
    "build_soft_operator",
    "build_hard_operator",
    "single_state_operator",
    "evolve",
    "hard_evolve",
    "solve_stationary",
    "first_passage_density",
    "measure_relaxation",
    "detect_oscillation",
]


def _bernoulli(w):
    """B(w) = w / (e^w - 1), stable for small and large |w|."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-8
    out[small] = 1.0 - 0.5 * w[small] + w[small] ** 2 / 12.0
    ws = w[~small]
    out[~small] = np.where(ws > 0, ws * np.exp(-ws) / (-np.expm1(-ws)), ws / np.expm1(ws))
    return out


def _check_resolution(params: TclParams, grid: Grid1D):
    if params.kappa > 0:
        limit = min(math.sqrt(params.kappa * params.tau) / 4.0,
                    (params.x_up - params.x_down) / 100.0)
        if grid.dx > limit * (1 + 1e-12):
            raise ValueError(
                f"grid too coarse: dx={grid.dx:.4g} exceeds the resolution rule "
                f"min(sqrt(kappa*tau)/4, band/100) = {limit:.4g}"
            )


def _advection_diffusion_block(centers, dx, target, tau, kappa,
                               absorb_left=False, absorb_right=False):
    """Single-state generator block in flux form.

    Returns (matrix (n x n), wall_coeff_left, wall_coeff_right), the wall
    coefficients c such that the absorbed mass rate is c * P_wall_cell; zero
    when the corresponding side is a no-flux boundary.
    """
    n = len(centers)
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    if kappa > 0:
        faces = np.concatenate([[centers[0] - dx / 2], 0.5 * (centers[1:] + centers[:-1]),
                                [centers[-1] + dx / 2]])
        v_face = -(faces - target) / tau
        w = v_face * dx / kappa
        b_plus = _bernoulli(w)     # multiplies the right cell
        b_minus = _bernoulli(-w)   # multiplies the left cell
        d = kappa / dx**2
        for f in range(1, n):  # interior face f sits between cells f-1 and f
            # F = (kappa/dx) [B(-w) P_left - B(w) P_right]
            add(f - 1, f - 1, -d * b_minus[f])
            add(f - 1, f, d * b_plus[f])
            add(f, f - 1, d * b_minus[f])
            add(f, f, -d * b_plus[f])
        c_left = c_right = 0.0
        if absorb_left:
            mid = centers[0] - dx / 4.0
            wh = -(mid - target) / tau * (dx / 2) / kappa
            c_left = (2 * kappa / dx) * float(_bernoulli(np.array([wh]))[0])
            add(0, 0, -c_left / dx)
        if absorb_right:
            mid = centers[-1] + dx / 4.0
            wh = -(mid - target) / tau * (dx / 2) / kappa
            c_right = (2 * kappa / dx) * float(_bernoulli(np.array([-wh]))[0])
            add(n - 1, n - 1, -c_right / dx)
    else:
        if absorb_left or absorb_right:
            raise ValueError("absorbing walls require kappa > 0")
        faces = np.concatenate([[centers[0] - dx / 2], 0.5 * (centers[1:] + centers[:-1]),
                                [centers[-1] + dx / 2]])
        v_face = -(faces - target) / tau
        for f in range(1, n):
            v = v_face[f]
            if v > 0:  # upwind from the left cell
                add(f - 1, f - 1, -v / dx)
                add(f, f - 1, v / dx)
            else:
                add(f - 1, f, -v / dx)
                add(f, f, v / dx)
        c_left = c_right = 0.0

    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return mat, c_left, c_right


@dataclass
class FpOperator:
    """Discrete generator acting on stacked (up, down) active-cell densities."""

    matrix: sp.csc_matrix
    grid: Grid1D
    params: TclParams
    kind: str                      # 'soft' or 'hard'
    up_active: np.ndarray          # bool masks on the full grid
    down_active: np.ndarray
    wall_coeff_up: float = 0.0     # absorbed-mass rate per unit density
    wall_coeff_down: float = 0.0
    wall_index_up: int = -1        # position in the reduced vector
    wall_index_down: int = -1

    @property
    def n_up(self) -> int:
        return int(self.up_active.sum())

    @property
    def n_down(self) -> int:
        return int(self.down_active.sum())

    def to_vector(self, state: FieldPair) -> np.ndarray:
        return np.concatenate([state.up[self.up_active], state.down[self.down_active]])

    def to_field(self, vec: np.ndarray, time: float = 0.0) -> FieldPair:
        up = np.zeros(self.grid.n_cells)
        down = np.zeros(self.grid.n_cells)
        up[self.up_active] = vec[: self.n_up]
        down[self.down_active] = vec[self.n_up :]
        return FieldPair(up, down, self.grid, time)

    def wall_fluxes(self, vec: np.ndarray) -> tuple[float, float]:
        """Instantaneous absorbed-mass rates (up at x_down, down at x_up)."""
        ju = self.wall_coeff_up * vec[self.wall_index_up] if self.wall_index_up >= 0 else 0.0
        jd = self.wall_coeff_down * vec[self.wall_index_down] if self.wall_index_down >= 0 else 0.0
        return ju, jd


def build_soft_operator(params: TclParams, grid: Grid1D) -> FpOperator:
    """Two-state generator with Poisson switching and no-flux outer boundaries.

    Up devices switch off at rate r where x < x_down, Down devices switch on
    at rate r where x > x_up.
    """
    if params.is_hard:
        raise ValueError("soft operator requires a finite switching rate")
    _check_resolution(params, grid)
    x = grid.centers
    n = grid.n_cells
    a_up, _, _ = _advection_diffusion_block(x, grid.dx, params.x_minus, params.tau,
                                            params.kappa)
    a_dn, _, _ = _advection_diffusion_block(x, grid.dx, params.x_plus, params.tau,
                                            params.kappa)
    r_up_down = params.rate * (x < params.x_down)   # on -> off, eligible below x_down
    r_down_up = params.rate * (x > params.x_up)     # off -> on, eligible above x_up
    ident = sp.identity(n, format="csr")
    top = sp.hstack([a_up - sp.diags(r_up_down), sp.diags(r_down_up)])
    bottom = sp.hstack([sp.diags(r_up_down), a_dn - sp.diags(r_down_up)])
    mat = sp.vstack([top, bottom]).tocsc()
    mask = np.ones(n, dtype=bool)
    return FpOperator(matrix=mat, grid=grid, params=params, kind="soft",
                      up_active=mask, down_active=mask.copy())


def _face_delta_cells(grid: Grid1D, x: float):
    """Cells receiving a unit delta at x: split across a face, else one cell."""
    k = (x - grid.x_lo) / grid.dx
    if abs(k - round(k)) < 1e-9:
        i = int(round(k))
        if 0 < i < grid.n_cells:
            return [(0.5, i - 1), (0.5, i)]
    return [(1.0, grid.cell_of(x))]


def build_hard_operator(params: TclParams, grid: Grid1D) -> FpOperator:
    """Absorbing walls on the threshold faces, absorbed flux reinjected.

    Up lives on x > x_down (absorbed at x_down, reappearing in Down there);
    Down lives on x < x_up (absorbed at x_up, reappearing in Up there).
    Thresholds must lie on faces of the grid.
    """
    if params.kappa <= 0:
        raise ValueError("the hard-model solver requires kappa > 0")
    _check_resolution(params, grid)
    faces = grid.faces
    for thr in (params.x_down, params.x_up):
        if np.min(np.abs(faces - thr)) > 1e-9 * grid.dx:
            raise ValueError("thresholds must lie on grid faces (use Grid1D.for_params)")
    x = grid.centers
    up_active = x > params.x_down
    down_active = x < params.x_up
    nu, nd = int(up_active.sum()), int(down_active.sum())

    a_up, c_up, _ = _advection_diffusion_block(x[up_active], grid.dx, params.x_minus,
                                               params.tau, params.kappa, absorb_left=True)
    a_dn, _, c_dn = _advection_diffusion_block(x[down_active], grid.dx, params.x_plus,
                                               params.tau, params.kappa, absorb_right=True)
    mat = sp.lil_matrix((nu + nd, nu + nd))
    mat[:nu, :nu] = a_up
    mat[nu:, nu:] = a_dn

    up_idx = np.where(up_active)[0]
    down_idx = np.where(down_active)[0]
    wall_up = 0                      # first up cell, just right of x_down
    wall_down = nd - 1               # last down cell, just left of x_up
    # the reinjection deltas sit exactly on faces: split evenly between the
    # two adjacent cells (keeps the discrete operator mirror symmetric)
    for frac, cell in _face_delta_cells(grid, params.x_down):
        mat[nu + int(np.searchsorted(down_idx, cell)), wall_up] += frac * c_up / grid.dx
    for frac, cell in _face_delta_cells(grid, params.x_up):
        mat[int(np.searchsorted(up_idx, cell)), nu + wall_down] += frac * c_dn / grid.dx

    return FpOperator(matrix=mat.tocsc(), grid=grid, params=params, kind="hard",
                      up_active=up_active, down_active=down_active,
                      wall_coeff_up=c_up, wall_coeff_down=c_dn,
                      wall_index_up=wall_up, wall_index_down=nu + wall_down)


def single_state_operator(params: TclParams, grid: Grid1D, sigma: SwitchState,
                          absorb_at=None):
    """Generator of one discrete state alone (no switching).

    ``absorb_at``: None for no-flux boundaries, or 'left'/'right' for an
    absorbing wall on that side of the grid.  Returns (matrix, wall_coeff).
    """
    target = params.target(sigma)
    mat, c_l, c_r = _advection_diffusion_block(
        grid.centers, grid.dx, target, params.tau, params.kappa,
        absorb_left=absorb_at == "left", absorb_right=absorb_at == "right")
    return mat, (c_l if absorb_at == "left" else c_r)


@dataclass
class EvolveResult:
    times: np.ndarray
    on_fraction: np.ndarray
    mass: np.ndarray
    final: FieldPair
    snapshots: list = field(default_factory=list)
    flux_up: np.ndarray | None = None
    flux_down: np.ndarray | None = None
    negativity: float = 0.0


def evolve(op: FpOperator, state: FieldPair, dt: float, n_steps: int,
           snapshot_every: int | None = None, record_flux: bool = False) -> EvolveResult:
    """Backward-Euler evolution of a FieldPair under the discrete generator."""
    if dt <= 0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    vec = op.to_vector(state)
    n_red = len(vec)
    system = (sp.identity(n_red, format="csc") - dt * op.matrix).tocsc()
    try:
        lu = spla.splu(system)
    except RuntimeError as exc:  # pragma: no cover - singular system diagnostics
        raise RuntimeError(f"implicit FP step factorization failed: {exc}") from exc

    dx = op.grid.dx
    times = np.empty(n_steps + 1)
    onf = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    ju = np.empty(n_steps + 1) if record_flux else None
    jd = np.empty(n_steps + 1) if record_flux else None
    snapshots = []
    negativity = 0.0

    def observe(k, t, v):
        times[k] = t
        m = dx * v.sum()
        mass[k] = m
        onf[k] = dx * v[: op.n_up].sum() / m if m > 0 else np.nan
        if record_flux:
            ju[k], jd[k] = op.wall_fluxes(v)
        if snapshot_every and (k % snapshot_every == 0 or k == n_steps):
            snapshots.append(op.to_field(v, time=t))

    t0 = state.time
    observe(0, t0, vec)
    for k in range(1, n_steps + 1):
        vec = lu.solve(vec)
        neg = vec.min()
        if neg < -1e-12:
            negativity = max(negativity, -neg)
        if neg < 0:
            total = vec.sum()
            vec = np.clip(vec, 0.0, None)
            s = vec.sum()
            if s > 0:
                vec *= total / s
        observe(k, t0 + k * dt, vec)

    return EvolveResult(times=times, on_fraction=onf, mass=mass,
                        final=op.to_field(vec, time=t0 + n_steps * dt),
                        snapshots=snapshots, flux_up=ju, flux_down=jd,
                        negativity=negativity)


def hard_evolve(params: TclParams, grid: Grid1D, state: FieldPair, dt: float,
                n_steps: int, snapshot_every: int | None = None) -> EvolveResult:
    """Evolve the hard model, recording the absorbed boundary fluxes."""
    op = build_hard_operator(params, grid)
    return evolve(op, state, dt, n_steps, snapshot_every=snapshot_every,
                  record_flux=True)


def solve_stationary(op: FpOperator, tol: float = 1e-10) -> FieldPair:
    """Normalized null vector of the discrete generator.

    The generator conserves mass (columns sum to zero), so one redundant row
    is replaced by the normalization condition and the bordered system is
    solved directly; the residual of the original operator is then verified.
    """
    n = op.matrix.shape[0]
    a = op.matrix.tolil(copy=True)
    a[n - 1, :] = op.grid.dx
    b = np.zeros(n)
    b[n - 1] = 1.0
    vec = spla.spsolve(a.tocsc(), b)
    resid = np.abs(op.matrix @ vec).max()
    scale = np.abs(op.matrix).max() * np.abs(vec).max()
    if not np.isfinite(resid) or resid > tol * max(scale, 1.0):
        raise RuntimeError(
            f"stationary solve did not converge: residual {resid:.3e} vs scale {scale:.3e}")
    vec = np.clip(vec, 0.0, None)
    vec /= op.grid.dx * vec.sum()
    return op.to_field(vec)


def first_passage_density(params: TclParams, grid: Grid1D, sigma: SwitchState,
                          dt: float, n_steps: int):
    """Absorbed-flux time series for one level started from its injection point.

    Up starts as a delta at x_up and is absorbed at x_down; Down starts at
    x_down and is absorbed at x_up.  Returns (times, density) where density
    integrates to the absorbed probability.
    """
    if params.kappa <= 0:
        raise ValueError("first passage requires kappa > 0")
    _check_resolution(params, grid)
    if sigma is SwitchState.UP:
        sub = Grid1D(params.x_down, grid.x_hi,
                     int(round((grid.x_hi - params.x_down) / grid.dx)))
        mat, c = single_state_operator(params, sub, sigma, absorb_at="left")
        wall_cell = 0
        start = params.x_up
    else:
        sub = Grid1D(grid.x_lo, params.x_up,
                     int(round((params.x_up - grid.x_lo) / grid.dx)))
        mat, c = single_state_operator(params, sub, sigma, absorb_at="right")
        wall_cell = sub.n_cells - 1
        start = params.x_down
    vec = np.zeros(sub.n_cells)
    for frac, cell in _face_delta_cells(sub, start):
        vec[cell] += frac / sub.dx
    lu = spla.splu((sp.identity(sub.n_cells, format="csc") - dt * mat).tocsc())
    times = np.arange(n_steps + 1) * dt
    dens = np.empty(n_steps + 1)
    dens[0] = c * vec[wall_cell]
    for k in range(1, n_steps + 1):
        vec = lu.solve(vec)
        dens[k] = c * vec[wall_cell]
    return times, dens


# ---------------------------------------------------------------------------
# Relaxation measurement
# ---------------------------------------------------------------------------

@dataclass
class RelaxationFit:
    gamma: float
    omega: float
    window: tuple
    residual: float
    model: str
    amplitude: float = 0.0
    offset: float = 0.0


def _initial_guesses(t, y, oscillatory):
    c0 = float(np.mean(y[-max(3, len(y) // 10):]))
    d = y - c0
    scale = np.max(np.abs(d)) or 1.0
    if oscillatory:
        yf = np.fft.rfft(d - d.mean())
        freqs = 2 * math.pi * np.fft.rfftfreq(len(t), d=t[1] - t[0])
        omega0 = float(freqs[np.argmax(np.abs(yf[1:])) + 1]) if len(yf) > 2 else 1.0
    else:
        omega0 = 0.0
    mask = np.abs(d) > 1e-3 * scale
    if mask.sum() > 3:
        slope = np.polyfit(t[mask], np.log(np.abs(d[mask]) + 1e-300), 1)[0]
        gamma0 = max(-slope, 1e-4)
    else:
        gamma0 = 1.0
    return c0, float(d[0]) or scale, gamma0, omega0


def measure_relaxation(times, values, model: str = "decay",
                       fit_window: tuple | None = None,
                       residual_tol: float = 0.2) -> RelaxationFit:
    """Fit A e^(-gamma t) (+ C) or A e^(-gamma t) cos(Omega t + phi) + C.

    The residual (RMS of the misfit over the data scale) above
    ``residual_tol`` is reported as a RuntimeError: the series is then not
    explained by a single mode on the chosen window.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if fit_window is not None:
        sel = (t >= fit_window[0]) & (t <= fit_window[1])
        t, y = t[sel], y[sel]
    if len(t) < 8:
        raise ValueError("too few samples in the fit window")
    t0 = t[0]
    ts = t - t0
    scale = np.max(np.abs(y - np.mean(y))) or 1.0

    if model == "decay":
        c0, a0, g0, _ = _initial_guesses(ts, y, oscillatory=False)

        def resid(p):
            a, g, c = p
            return (a * np.exp(-g * ts) + c - y) / scale

        sol = least_squares(resid, [a0, g0, c0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        a, g, c = sol.x
        fit = RelaxationFit(gamma=float(g), omega=0.0, window=(t0, t[-1]),
                            residual=float(np.sqrt(np.mean(sol.fun**2))),
                            model=model, amplitude=float(a), offset=float(c))
    elif model == "oscillation":
        c0, a0, g0, w0 = _initial_guesses(ts, y, oscillatory=True)

        def resid(p):
            a, g, w, phi, c = p
            return (a * np.exp(-g * ts) * np.cos(w * ts + phi) + c - y) / scale

        best = None
        for w_try in {w0, max(w0, 1e-3) * 0.5, max(w0, 1e-3) * 2.0}:
            for phi_try in (0.0, math.pi / 2):
                sol = least_squares(resid, [a0, g0, w_try, phi_try, c0],
                                    xtol=1e-15, ftol=1e-15, gtol=1e-15)
                if best is None or sol.cost < best.cost:
                    best = sol
        a, g, w, phi, c = best.x
        fit = RelaxationFit(gamma=float(g), omega=abs(float(w)), window=(t0, t[-1]),
                            residual=float(np.sqrt(np.mean(best.fun**2))),
                            model=model, amplitude=float(a), offset=float(c))
    else:
        raise ValueError(f"unknown relaxation model {model!r}")

    if fit.residual > residual_tol:
        raise RuntimeError(
            f"poor relaxation fit: residual {fit.residual:.3g} exceeds {residual_tol}")
    return fit


def detect_oscillation(times, values, fit_window=None):
    """Classify a relaxation trace as oscillatory or monotone.

    Returns (is_oscillatory, best_fit).  Oscillatory means the damped-cosine
    model reduces the misfit substantially and completes at least one period
    while the envelope is still visible (within ~4 e-foldings); a slow
    undershoot that never wraps a full phase counts as monotone.
    """
    decay = measure_relaxation(times, values, "decay", fit_window, residual_tol=np.inf)
    osc = measure_relaxation(times, values, "oscillation", fit_window, residual_tol=np.inf)
    span = osc.window[1] - osc.window[0]
    visible = min(span, 4.0 / osc.gamma) if osc.gamma > 0 else span
    is_osc = (osc.residual < 0.35 * max(decay.residual, 1e-15)
              and osc.omega * visible > 2 * math.pi)
    return (is_osc, osc if is_osc else decay)
