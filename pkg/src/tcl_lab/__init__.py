"""Numerical laboratory for thermostatically controlled load ensembles."""

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

__version__ = "0.1.0"

__all__ = [
    "HARD_RATE",
    "FieldPair",
    "Grid1D",
    "SwitchState",
    "TclParams",
    "deadband_cycle_time",
    "deterministic_flow",
    "drift",
    "geometry",
    "__version__",
]
