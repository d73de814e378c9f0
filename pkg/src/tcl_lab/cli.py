"""Command-line front end: experiment configuration, runs, CSV emission.

Configuration files are INI-style with the sections [params], [grid], [fp],
[mc], [spectral], [cycles] and [output]; every key has a default, unknown
keys are rejected with their line number.  Each subcommand writes CSV files
with a header row plus a plain-text manifest recording the configuration
hash, the seed and the library versions, so outputs are reproducible
byte-for-byte from (config, seed) on the same build.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from tcl_lab import __version__
from tcl_lab.core import FieldPair, Grid1D, TclParams, geometry

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "serialize_config", "main"]


class ConfigError(ValueError):
    """Configuration file rejected; the message carries file/line context."""


@dataclass(frozen=True)
class ExperimentConfig:
    params: TclParams = TclParams(-2.0, -1.0, 1.0, 2.0, tau=1.0, kappa=0.1)
    # grid
    dx_target: float = 0.01
    pad_sigmas: float = 6.0
    # fp
    fp_dt: float = 0.005
    fp_n_steps: int = 2000
    fp_snapshot_every: int = 0
    fp_p_up: float = 0.7
    fp_blob_center: float = 0.0
    fp_blob_std: float = 0.25
    # mc
    mc_n_devices: int = 10000
    mc_t_end: float = 20.0
    mc_dt: float = 0.01
    mc_seed: int = 0
    mc_snapshot_times: tuple = ()
    # spectral search window
    re_min: float = -0.5
    re_max: float = 8.0
    im_min: float = -8.0
    im_max: float = 8.0
    n_re: int = 69
    n_im: int = 69
    # cycle statistics
    cycles_t_max: float = 22.0
    cycles_n_time: int = 220
    omega_points: int = 25
    # output
    directory: str = "./tcl-lab-out"


_SCHEMA = {
    "params": {"x_minus", "x_down", "x_up", "x_plus", "tau", "kappa", "rate"},
    "grid": {"dx_target", "pad_sigmas"},
    "fp": {"dt", "n_steps", "snapshot_every", "p_up", "blob_center", "blob_std"},
    "mc": {"n_devices", "t_end", "dt", "seed", "snapshot_times"},
    "spectral": {"re_min", "re_max", "im_min", "im_max", "n_re", "n_im"},
    "cycles": {"t_max", "n_time", "omega_points"},
    "output": {"directory"},
}


def _line_of(text: str, token: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#")[0].split(";")[0]
        if token in stripped:
            return i
    return 0


def parse_config(path: str) -> ExperimentConfig:
    """Parse and validate a configuration file, filling defaults."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(raw)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}:{_line_of(raw, '[' + section + ']')}: "
                              f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}:{_line_of(raw, key)}: unknown key "
                                  f"'{key}' in [{section}]")

    def get(section, key, cast, default):
        if cp.has_option(section, key):
            try:
                return cast(cp.get(section, key))
            except ValueError as exc:
                raise ConfigError(f"{path}:{_line_of(raw, key)}: bad value for "
                                  f"{section}.{key}: {exc}") from exc
        return default

    base = ExperimentConfig()
    try:
        params = TclParams(
            x_minus=get("params", "x_minus", float, base.params.x_minus),
            x_down=get("params", "x_down", float, base.params.x_down),
            x_up=get("params", "x_up", float, base.params.x_up),
            x_plus=get("params", "x_plus", float, base.params.x_plus),
            tau=get("params", "tau", float, base.params.tau),
            kappa=get("params", "kappa", float, base.params.kappa),
            rate=get("params", "rate", float, base.params.rate),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}:{_line_of(raw, '[params]')}: {exc}") from exc

    def times(text):
        text = text.strip()
        if not text:
            return ()
        return tuple(float(v) for v in text.split(","))

    cfg = ExperimentConfig(
        params=params,
        dx_target=get("grid", "dx_target", float, base.dx_target),
        pad_sigmas=get("grid", "pad_sigmas", float, base.pad_sigmas),
        fp_dt=get("fp", "dt", float, base.fp_dt),
        fp_n_steps=get("fp", "n_steps", int, base.fp_n_steps),
        fp_snapshot_every=get("fp", "snapshot_every", int, base.fp_snapshot_every),
        fp_p_up=get("fp", "p_up", float, base.fp_p_up),
        fp_blob_center=get("fp", "blob_center", float, base.fp_blob_center),
        fp_blob_std=get("fp", "blob_std", float, base.fp_blob_std),
        mc_n_devices=get("mc", "n_devices", int, base.mc_n_devices),
        mc_t_end=get("mc", "t_end", float, base.mc_t_end),
        mc_dt=get("mc", "dt", float, base.mc_dt),
        mc_seed=get("mc", "seed", int, base.mc_seed),
        mc_snapshot_times=get("mc", "snapshot_times", times, base.mc_snapshot_times),
        re_min=get("spectral", "re_min", float, base.re_min),
        re_max=get("spectral", "re_max", float, base.re_max),
        im_min=get("spectral", "im_min", float, base.im_min),
        im_max=get("spectral", "im_max", float, base.im_max),
        n_re=get("spectral", "n_re", int, base.n_re),
        n_im=get("spectral", "n_im", int, base.n_im),
        cycles_t_max=get("cycles", "t_max", float, base.cycles_t_max),
        cycles_n_time=get("cycles", "n_time", int, base.cycles_n_time),
        omega_points=get("cycles", "omega_points", int, base.omega_points),
        directory=get("output", "directory", str, base.directory),
    )
    for name in ("dx_target", "fp_dt", "mc_dt", "cycles_t_max"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{path}: {name} must be positive")
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) == cfg."""
    p = cfg.params
    rate = "inf" if math.isinf(p.rate) else repr(p.rate)
    lines = [
        "[params]",
        f"x_minus = {p.x_minus!r}", f"x_down = {p.x_down!r}",
        f"x_up = {p.x_up!r}", f"x_plus = {p.x_plus!r}",
        f"tau = {p.tau!r}", f"kappa = {p.kappa!r}", f"rate = {rate}",
        "", "[grid]",
        f"dx_target = {cfg.dx_target!r}", f"pad_sigmas = {cfg.pad_sigmas!r}",
        "", "[fp]",
        f"dt = {cfg.fp_dt!r}", f"n_steps = {cfg.fp_n_steps}",
        f"snapshot_every = {cfg.fp_snapshot_every}",
        f"p_up = {cfg.fp_p_up!r}", f"blob_center = {cfg.fp_blob_center!r}",
        f"blob_std = {cfg.fp_blob_std!r}",
        "", "[mc]",
        f"n_devices = {cfg.mc_n_devices}", f"t_end = {cfg.mc_t_end!r}",
        f"dt = {cfg.mc_dt!r}", f"seed = {cfg.mc_seed}",
        f"snapshot_times = {','.join(repr(t) for t in cfg.mc_snapshot_times)}",
        "", "[spectral]",
        f"re_min = {cfg.re_min!r}", f"re_max = {cfg.re_max!r}",
        f"im_min = {cfg.im_min!r}", f"im_max = {cfg.im_max!r}",
        f"n_re = {cfg.n_re}", f"n_im = {cfg.n_im}",
        "", "[cycles]",
        f"t_max = {cfg.cycles_t_max!r}", f"n_time = {cfg.cycles_n_time}",
        f"omega_points = {cfg.omega_points}",
        "", "[output]",
        f"directory = {cfg.directory}",
        "",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _write_csv(path, header, columns):
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_manifest(out_dir, subcommand, cfg, seed, outputs, extra=None,
                    status="complete"):
    digest = hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
    lines = [
        f"subcommand={subcommand}",
        f"config_sha256={digest}",
        f"seed={seed}",
        f"tcl_lab_version={__version__}",
        f"numpy_version={np.__version__}",
        f"status={status}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    for name in outputs:
        lines.append(f"output={name}")
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _grid(cfg) -> Grid1D:
    return Grid1D.for_params(cfg.params, dx_target=cfg.dx_target,
                             n_sigma=cfg.pad_sigmas)


def _blob_state(cfg, grid) -> FieldPair:
    x = grid.centers
    blob = np.exp(-(x - cfg.fp_blob_center) ** 2 / (2 * cfg.fp_blob_std**2))
    blob /= grid.dx * blob.sum()
    return FieldPair(cfg.fp_p_up * blob, (1 - cfg.fp_p_up) * blob, grid)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_steady(cfg, out_dir, seed):
    from tcl_lab.steady import stationary_diffusionless_hard, stationary_hard

    grid = _grid(cfg)
    if cfg.params.kappa > 0:
        sol = stationary_hard(cfg.params, grid)
    else:
        sol = stationary_diffusionless_hard(cfg.params, grid)
    _write_csv(os.path.join(out_dir, "steady.csv"), ["x", "p_up", "p_down"],
               [grid.centers, sol.field.up, sol.field.down])
    _write_manifest(out_dir, "steady", cfg, seed, ["steady.csv"],
                    extra={"flux_j": repr(sol.flux)})
    return 0


def _cmd_simulate(cfg, out_dir, seed):
    from tcl_lab import mc

    trace = mc.simulate_ensemble(cfg.params, cfg.mc_n_devices, cfg.mc_t_end,
                                 cfg.mc_dt, seed=seed,
                                 snapshot_times=cfg.mc_snapshot_times or
                                 (cfg.mc_t_end,))
    _write_csv(os.path.join(out_dir, "trace.csv"), ["t", "on_fraction"],
               [trace.times, trace.on_fraction])
    outputs = ["trace.csv"]
    grid = _grid(cfg)
    for snap in trace.snapshots:
        f = mc.empirical_distribution(snap.x, snap.sigma_up, grid)
        name = f"histogram_t{snap.time:g}.csv"
        _write_csv(os.path.join(out_dir, name), ["x", "p_up", "p_down"],
                   [grid.centers, f.up, f.down])
        outputs.append(name)
    _write_csv(os.path.join(out_dir, "cycles.csv"), ["device", "cycles"],
               [np.arange(len(trace.cycles)), trace.cycles])
    outputs.append("cycles.csv")
    _write_manifest(out_dir, "simulate", cfg, seed, outputs)
    return 0


def _cmd_fp_evolve(cfg, out_dir, seed):
    from tcl_lab import fp

    grid = _grid(cfg)
    state = _blob_state(cfg, grid)
    if cfg.params.is_hard:
        res = fp.hard_evolve(cfg.params, grid, state, cfg.fp_dt, cfg.fp_n_steps,
                             snapshot_every=cfg.fp_snapshot_every or None)
    else:
        op = fp.build_soft_operator(cfg.params, grid)
        res = fp.evolve(op, state, cfg.fp_dt, cfg.fp_n_steps,
                        snapshot_every=cfg.fp_snapshot_every or None)
    _write_csv(os.path.join(out_dir, "evolve.csv"), ["t", "on_fraction", "mass"],
               [res.times, res.on_fraction, res.mass])
    _write_csv(os.path.join(out_dir, "final_state.csv"), ["x", "p_up", "p_down"],
               [grid.centers, res.final.up, res.final.down])
    _write_manifest(out_dir, "fp-evolve", cfg, seed,
                    ["evolve.csv", "final_state.csv"])
    return 0


def _cmd_spectrum_hard(cfg, out_dir, seed):
    from tcl_lab import spectrum
    from tcl_lab.specfun import RootSearchRegion

    region = RootSearchRegion(cfg.re_min, cfg.re_max, cfg.im_min, cfg.im_max,
                              n_re=cfg.n_re, n_im=cfg.n_im)
    re, im, vals = spectrum.scan_hard_det(cfg.params, region)
    rr, ii = np.meshgrid(re, im)
    _write_csv(os.path.join(out_dir, "isolines.csv"),
               ["re", "im", "det_re", "det_im"],
               [rr.ravel(), ii.ravel(), vals.real.ravel(), vals.imag.ravel()])
    eigs = spectrum.hard_eigenvalues(cfg.params, region)
    _write_csv(os.path.join(out_dir, "roots.csv"), ["re", "im", "residual"],
               [[e.lam.real for e in eigs], [e.lam.imag for e in eigs],
                [e.residual for e in eigs]])
    _write_manifest(out_dir, "spectrum-hard", cfg, seed,
                    ["isolines.csv", "roots.csv"])
    return 0


def _cmd_spectrum_soft(cfg, out_dir, seed):
    from tcl_lab import spectrum
    from tcl_lab.specfun import RootSearchRegion

    region = RootSearchRegion(cfg.re_min, cfg.re_max, cfg.im_min, cfg.im_max,
                              n_re=cfg.n_re, n_im=cfg.n_im)
    eigs = spectrum.soft_poles(cfg.params, region)
    _write_csv(os.path.join(out_dir, "roots.csv"), ["re", "im"],
               [[e.lam.real for e in eigs], [e.lam.imag for e in eigs]])
    _write_manifest(out_dir, "spectrum-soft", cfg, seed, ["roots.csv"])
    return 0


def _cmd_toy(cfg, out_dir, seed):
    from tcl_lab import spectrum
    from tcl_lab.core import deadband_cycle_time
    from tcl_lab.specfun import RootSearchRegion

    t_dc = deadband_cycle_time(cfg.params)
    rate = cfg.params.rate if not cfg.params.is_hard else 2.0
    region = RootSearchRegion(cfg.re_min, cfg.re_max, cfg.im_min, cfg.im_max,
                              n_re=cfg.n_re, n_im=cfg.n_im)
    toy = spectrum.toy_spectrum(rate, t_dc, region)
    _write_csv(os.path.join(out_dir, "toy_roots.csv"), ["re", "im"],
               [[(-e.lam).real for e in toy.roots], [(-e.lam).imag for e in toy.roots]])
    _write_manifest(out_dir, "toy", cfg, seed, ["toy_roots.csv"],
                    extra={"r_critical": repr(toy.r_cr),
                           "real_nonzero_roots": ";".join(
                               repr(s) for s in toy.real_nonzero_roots)})
    return 0


def _cmd_cycles(cfg, out_dir, seed):
    from tcl_lab import cycles

    p = cfg.params
    if p.is_hard:
        raise SystemExit("the cycles subcommand needs a finite switching rate")
    g = geometry(p)
    t = np.linspace(0.0, cfg.cycles_t_max, cfg.cycles_n_time)
    _write_csv(os.path.join(out_dir, "out_density.csv"),
               ["t", "p_out_lower", "p_out_upper"],
               [t, cycles.p_out(t, g.alpha, p.rate, p.tau),
                cycles.p_out(t, g.beta, p.rate, p.tau)])
    law = cycles.cycles_given_time(cfg.cycles_t_max, p)
    _write_csv(os.path.join(out_dir, "count_law.csv"), ["n", "pmf"],
               [law.n, law.pmf])
    _write_manifest(out_dir, "cycles", cfg, seed,
                    ["out_density.csv", "count_law.csv"],
                    extra={"mean_cycle_time": repr(cycles.mean_cycle_time(p)),
                           "t_dc": repr(g.t_dc)})
    return 0


def _cmd_ld(cfg, out_dir, seed):
    from tcl_lab import cycles

    p = cfg.params
    if p.is_hard:
        raise SystemExit("the ld subcommand needs a finite switching rate")
    g = geometry(p)
    omega_bar = 1.0 / cycles.mean_cycle_time(p)
    omegas = np.linspace(0.3 * omega_bar, 0.985 / g.t_dc, cfg.omega_points)
    rows = [cycles.ld_function(w, p) for w in omegas]
    _write_csv(os.path.join(out_dir, "ld.csv"), ["omega", "rate_s", "saddle"],
               [omegas, [r[0] for r in rows], [r[1] for r in rows]])
    _write_manifest(out_dir, "ld", cfg, seed, ["ld.csv"],
                    extra={"omega_bar": repr(omega_bar)})
    return 0


def _cmd_validate(cfg, out_dir, seed):
    from tcl_lab.acceptance import AcceptanceSuite, format_table

    suite = AcceptanceSuite(seed=seed)
    results = suite.run(verbose=True)
    print()
    print(format_table(results))
    _write_csv(os.path.join(out_dir, "acceptance.csv"),
               ["criterion", "name", "measured", "target", "passed", "note"],
               [[r.criterion for r in results], [r.name for r in results],
                [r.measured for r in results], [r.target for r in results],
                [int(r.passed) for r in results], [r.note for r in results]])
    ok = all(r.passed for r in results)
    _write_manifest(out_dir, "validate", cfg, seed, ["acceptance.csv"],
                    extra={"checks_passed": sum(r.passed for r in results),
                           "checks_total": len(results)},
                    status="complete" if ok else "failed-checks")
    return 0 if ok else 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fp-evolve": _cmd_fp_evolve,
    "steady": _cmd_steady,
    "spectrum-hard": _cmd_spectrum_hard,
    "spectrum-soft": _cmd_spectrum_soft,
    "toy": _cmd_toy,
    "cycles": _cmd_cycles,
    "ld": _cmd_ld,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tcl-lab",
        description="Numerical laboratory for thermostatically controlled loads")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None,
                        help="INI configuration file (defaults used if omitted)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the Monte Carlo seed")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config) if args.config else ExperimentConfig()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_dir = args.out or os.environ.get("TCL_LAB_OUT") or cfg.directory
    os.makedirs(out_dir, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.mc_seed
    try:
        return _COMMANDS[args.subcommand](cfg, out_dir, seed)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
