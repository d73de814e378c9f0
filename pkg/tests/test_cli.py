import math
import os

import numpy as np
import pytest

from tcl_lab.cli import (
    ConfigError,
    ExperimentConfig,
    main,
    parse_config,
    serialize_config,
)
from tcl_lab.core import TclParams


def write(tmp_path, text, name="config.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestConfig:
    def test_minimal_config_fills_defaults(self, tmp_path):
        path = write(tmp_path, "[params]\nx_minus = -3.0\nkappa = 0.2\n")
        cfg = parse_config(path)
        assert cfg.params.x_minus == -3.0
        assert cfg.params.kappa == 0.2
        assert cfg.params.x_up == 1.0          # default retained
        assert cfg.fp_dt == ExperimentConfig().fp_dt

    def test_invalid_ordering_reports_invariant(self, tmp_path):
        path = write(tmp_path, "[params]\nx_down = 1.5\nx_up = -1.5\n")
        with pytest.raises(ConfigError, match="x_minus < x_down < x_up < x_plus"):
            parse_config(path)

    def test_unknown_key_rejected_with_line_number(self, tmp_path):
        path = write(tmp_path, "[params]\nx_minus = -2.0\nbogus_key = 3\n")
        with pytest.raises(ConfigError, match=r":3: unknown key 'bogus_key'"):
            parse_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write(tmp_path, "[params]\nx_minus = -2.0\n\n[mystery]\na = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(path)

    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(
            params=TclParams(-3.0, -1.2, 0.8, 2.5, tau=0.7, kappa=0.02, rate=1.5),
            dx_target=0.004, mc_snapshot_times=(1.0, 2.5), mc_seed=99,
            directory="some/dir")
        path = write(tmp_path, serialize_config(cfg))
        assert parse_config(path) == cfg

    def test_round_trip_infinite_rate(self, tmp_path):
        cfg = ExperimentConfig()
        assert cfg.params.is_hard
        path = write(tmp_path, serialize_config(cfg))
        assert parse_config(path) == cfg

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            parse_config("/nonexistent/config.ini")


class TestCommands:
    def test_steady_outputs(self, tmp_path):
        cfg_path = write(tmp_path, "[params]\nkappa = 0.1\n\n[grid]\ndx_target = 0.02\n")
        out = tmp_path / "out"
        rc = main(["steady", "--config", cfg_path, "--out", str(out)])
        assert rc == 0
        data = np.genfromtxt(out / "steady.csv", delimiter=",", names=True)
        assert set(data.dtype.names) == {"x", "p_up", "p_down"}
        manifest = (out / "manifest.txt").read_text()
        assert "flux_j=" in manifest
        assert "config_sha256=" in manifest
        # density normalized on the emitted grid
        dx = data["x"][1] - data["x"][0]
        assert dx * (data["p_up"].sum() + data["p_down"].sum()) == pytest.approx(
            1.0, abs=1e-4)

    def test_simulate_reproducible_byte_for_byte(self, tmp_path):
        cfg_path = write(
            tmp_path,
            "[params]\nkappa = 0.0\nrate = 1.0\n\n"
            "[mc]\nn_devices = 200\nt_end = 3.0\ndt = 0.01\nseed = 7\n"
            "snapshot_times = 3.0\n\n[grid]\ndx_target = 0.05\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg_path, "--out", str(out1)]) == 0
        assert main(["simulate", "--config", cfg_path, "--out", str(out2)]) == 0
        for name in os.listdir(out1):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_fp_evolve_runs(self, tmp_path):
        cfg_path = write(
            tmp_path,
            "[params]\nkappa = 0.01\nrate = 2.0\n\n"
            "[grid]\ndx_target = 0.02\n\n[fp]\ndt = 0.01\nn_steps = 50\n")
        out = tmp_path / "out"
        assert main(["fp-evolve", "--config", cfg_path, "--out", str(out)]) == 0
        data = np.genfromtxt(out / "evolve.csv", delimiter=",", names=True)
        assert abs(data["mass"][-1] - 1.0) < 1e-9

    def test_spectrum_hard_emits_isolines_and_roots(self, tmp_path):
        cfg_path = write(
            tmp_path,
            "[params]\nkappa = 0.1\n\n"
            "[spectral]\nre_min = -0.5\nre_max = 4.0\nim_min = -4.0\n"
            "im_max = 4.0\nn_re = 31\nn_im = 31\n")
        out = tmp_path / "out"
        assert main(["spectrum-hard", "--config", cfg_path, "--out", str(out)]) == 0
        iso = np.genfromtxt(out / "isolines.csv", delimiter=",", names=True)
        assert set(iso.dtype.names) == {"re", "im", "det_re", "det_im"}
        assert len(iso) == 31 * 31
        roots = np.genfromtxt(out / "roots.csv", delimiter=",", names=True)
        assert np.min(np.hypot(roots["re"], roots["im"])) < 1e-7

    def test_toy_manifest_has_critical_rate(self, tmp_path, ln9):
        cfg_path = write(
            tmp_path,
            "[params]\nkappa = 0.0\nrate = 2.0\n\n"
            "[spectral]\nre_min = -2.4\nre_max = 0.3\nim_min = -15\nim_max = 15\n"
            "n_re = 41\nn_im = 241\n")
        out = tmp_path / "out"
        assert main(["toy", "--config", cfg_path, "--out", str(out)]) == 0
        manifest = (out / "manifest.txt").read_text()
        line = [l for l in manifest.splitlines() if l.startswith("r_critical=")][0]
        assert float(line.split("=")[1]) == pytest.approx(0.5569 / ln9, abs=1e-4)

    def test_cycles_and_ld(self, tmp_path):
        cfg_path = write(
            tmp_path,
            "[params]\nkappa = 0.0\nrate = 1.0\n\n"
            "[cycles]\nt_max = 11.0\nn_time = 40\nomega_points = 7\n")
        out = tmp_path / "out"
        assert main(["cycles", "--config", cfg_path, "--out", str(out)]) == 0
        law = np.genfromtxt(out / "count_law.csv", delimiter=",", names=True)
        assert law["pmf"].sum() == pytest.approx(1.0, abs=1e-9)
        out2 = tmp_path / "out2"
        assert main(["ld", "--config", cfg_path, "--out", str(out2)]) == 0
        ld = np.genfromtxt(out2 / "ld.csv", delimiter=",", names=True)
        assert np.all(ld["rate_s"] > -1e-10)

    def test_env_override_directory(self, tmp_path, monkeypatch):
        cfg_path = write(tmp_path, "[params]\nkappa = 0.1\n\n[grid]\ndx_target = 0.02\n")
        target = tmp_path / "env-out"
        monkeypatch.setenv("TCL_LAB_OUT", str(target))
        assert main(["steady", "--config", cfg_path]) == 0
        assert (target / "steady.csv").exists()

    def test_bad_config_exit_code(self, tmp_path):
        cfg_path = write(tmp_path, "[params]\nx_down = 5.0\n")
        assert main(["steady", "--config", cfg_path]) == 2
