"""Single-device model: parameters, deterministic kinematics, grids, density fields.

A thermostatically controlled load (TCL) cycles between two discrete states:
Up (compressor on, temperature relaxes toward ``x_minus``) and Down (off,
relaxes toward ``x_plus``).  Switching happens at the deadband edges
``x_down`` / ``x_up``, either instantaneously (hard model) or as a Poisson
event with rate ``r`` once the device is past the edge (soft model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "HARD_RATE",
    "SwitchState",
    "TclParams",
    "DerivedGeometry",
    "Grid1D",
    "FieldPair",
    "deadband_cycle_time",
    "geometry",
    "drift",
    "deterministic_flow",
]

# Sentinel switching rate selecting the hard (bang-bang) model.  Infinity is a
# distinguished value, never compared against "large" finite rates.
HARD_RATE = math.inf


class SwitchState(Enum):
    """Discrete device state.  Up cools toward x_minus, Down heats toward x_plus."""

    UP = 1
    DOWN = 0


@dataclass(frozen=True)
class TclParams:
    """Physical parameter set of a single device.

    Temperatures must be ordered x_minus < x_down < x_up < x_plus.  ``kappa``
    is the thermal diffusion coefficient appearing as ``kappa * d2P/dx2`` in
    the Fokker-Planck equations, so the within-state equilibrium density is a
    Gaussian of variance ``kappa * tau``.  ``rate=HARD_RATE`` selects the hard
    model.
    """

    x_minus: float
    x_down: float
    x_up: float
    x_plus: float
    tau: float = 1.0
    kappa: float = 0.0
    rate: float = HARD_RATE

    def __post_init__(self):
        if not (self.x_minus < self.x_down < self.x_up < self.x_plus):
            raise ValueError(
                "temperatures must satisfy x_minus < x_down < x_up < x_plus, "
                f"got ({self.x_minus}, {self.x_down}, {self.x_up}, {self.x_plus})"
            )
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        if not self.rate > 0:
            raise ValueError(f"rate must be positive or infinite, got {self.rate}")

    @property
    def is_hard(self) -> bool:
        return math.isinf(self.rate)

    def target(self, sigma: SwitchState) -> float:
        """Equilibrium temperature of the given discrete state."""
        return self.x_minus if sigma is SwitchState.UP else self.x_plus


@dataclass(frozen=True)
class DerivedGeometry:
    """Dimensionless deadband geometry and the deterministic cycle period."""

    alpha: float
    beta: float
    t_dc: float
    u: float  # |dx/dt| at (x_up, Up)


def deadband_cycle_time(params: TclParams) -> float:
    """Period of the deterministic (hard, noiseless) deadband cycle."""
    num = (params.x_up - params.x_minus) * (params.x_plus - params.x_down)
    den = (params.x_down - params.x_minus) * (params.x_plus - params.x_up)
    return params.tau * math.log(num / den)


def geometry(params: TclParams) -> DerivedGeometry:
    """Deadband ratios alpha, beta, the cycle period and the reference speed."""
    alpha = (params.x_down - params.x_minus) / (params.x_plus - params.x_down)
    beta = (params.x_plus - params.x_up) / (params.x_up - params.x_minus)
    return DerivedGeometry(
        alpha=alpha,
        beta=beta,
        t_dc=deadband_cycle_time(params),
        u=(params.x_up - params.x_minus) / params.tau,
    )


def drift(x, sigma: SwitchState, params: TclParams):
    """Deterministic velocity dx/dt at temperature ``x`` in state ``sigma``."""
    return -(np.asarray(x) - params.target(sigma)) / params.tau


def deterministic_flow(x0, sigma: SwitchState, dt, params: TclParams):
    """Exact noiseless relaxation over time ``dt`` (exponential toward target)."""
    m = params.target(sigma)
    decay = np.exp(-np.asarray(dt) / params.tau)
    # x0*decay + m*(1-decay) rather than m + (x0-m)*decay: exact at dt = 0
    return np.asarray(x0) * decay + m * (1.0 - decay)


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on [x_lo, x_hi] with n_cells cells."""

    x_lo: float
    x_hi: float
    n_cells: int

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValueError("x_lo must be below x_hi")
        if self.n_cells < 2:
            raise ValueError("need at least 2 cells")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return self.x_lo + np.arange(self.n_cells + 1) * self.dx

    def cell_of(self, x: float) -> int:
        """Index of the cell whose half-open interval [face_i, face_i+1) holds x.

        Positions within 1e-9 dx of a face are snapped to it, so thresholds
        constructed to lie on faces index the cell to their right.
        """
        k = (x - self.x_lo) / self.dx
        i = int(np.floor(k + 1e-9))
        return min(max(i, 0), self.n_cells - 1)

    @staticmethod
    def padding(params: TclParams, n_sigma: float = 6.0) -> float:
        """Default Gaussian-tail padding beyond [x_minus, x_plus]."""
        return n_sigma * math.sqrt(params.kappa * params.tau / 2.0)

    @classmethod
    def for_params(
        cls,
        params: TclParams,
        dx_target: float,
        n_sigma: float = 6.0,
    ) -> "Grid1D":
        """Grid covering the padded domain with the thresholds on cell faces.

        The cell width is adjusted (downward) so that x_down and x_up fall
        exactly on faces; hard-model absorbing walls then coincide with faces.
        """
        band = params.x_up - params.x_down
        m = max(2, math.ceil(band / dx_target))
        dx = band / m
        pad = cls.padding(params, n_sigma)
        lo_want = min(params.x_minus, params.x_down) - pad
        hi_want = max(params.x_plus, params.x_up) + pad
        n_lo = math.ceil((params.x_down - lo_want) / dx - 1e-12)
        n_hi = math.ceil((hi_want - params.x_up) / dx - 1e-12)
        return cls(
            x_lo=params.x_down - n_lo * dx,
            x_hi=params.x_up + n_hi * dx,
            n_cells=n_lo + m + n_hi,
        )


@dataclass
class FieldPair:
    """Densities (P_up, P_down) sampled on the cells of a common grid."""

    up: np.ndarray
    down: np.ndarray
    grid: Grid1D
    time: float = 0.0

    def __post_init__(self):
        self.up = np.asarray(self.up, dtype=float)
        self.down = np.asarray(self.down, dtype=float)
        n = self.grid.n_cells
        if self.up.shape != (n,) or self.down.shape != (n,):
            raise ValueError("field arrays must match the grid size")

    def mass(self) -> float:
        return self.grid.dx * float(np.sum(self.up) + np.sum(self.down))

    def on_fraction(self) -> float:
        return self.grid.dx * float(np.sum(self.up)) / self.mass()

    def normalized(self) -> "FieldPair":
        m = self.mass()
        if m <= 0:
            raise ValueError("cannot normalize a field with non-positive mass")
        return FieldPair(self.up / m, self.down / m, self.grid, self.time)

    def l1_distance(self, other: "FieldPair") -> float:
        """L1 distance between two fields on the same grid."""
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return self.grid.dx * float(
            np.sum(np.abs(self.up - other.up)) + np.sum(np.abs(self.down - other.down))
        )
