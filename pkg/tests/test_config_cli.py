import json
import math
from pathlib import Path

import numpy as np
import pytest

from bousslab.cli import execute_oracles, execute_run, execute_sweep, main
from bousslab.config import load_config, parse_config
from bousslab.model import ConfigurationError

EQUILIBRIUM = """
[model]
beta1 = 1.2
beta2 = 0.9

[data]
markers = 128
rho_amplitude = 0.0

[solver]
t_end = 1.0
frame_stride = 1
"""

SMALL_WARMUP = """
[model]
beta1 = 1.0
beta2 = 1.0

[data]
frame = "x_warmup"
markers = 256

[solver]
t_end = 6.0
omega_cap = 1e4
frame_stride = 4
"""

SMALL_SWEEP = """
[model]
beta1 = 1.2
beta2 = 0.9

[data]
markers = 128

[solver]
t_end = 3e-4
frame_stride = 4

[sweep]
beta1 = [1.0, 1.2]
beta2 = [0.9]
workers = 1
"""


class TestConfigParsing:
    def test_defaults(self):
        cfg = parse_config("[model]\nbeta1 = 1.2\nbeta2 = 0.9\n")
        assert cfg.spec.L4 == 14.0 and cfg.spec.n_markers == 4096
        assert cfg.ctrl.dt_init == 1e-6 and cfg.ctrl.omega_cap == 1e8
        assert cfg.params.blow_up_range

    def test_ladder_violation_names_constraint(self):
        with pytest.raises(ConfigurationError, match="1 < L0"):
            parse_config("[model]\nbeta1 = 1.2\nbeta2 = 0.9\n\n[data]\nL0 = 0.5\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown key"):
            parse_config("[model]\nbeta1 = 1.2\nbeta2 = 0.9\nbetamax = 3\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown section"):
            parse_config("[model]\nbeta1 = 1.2\nbeta2 = 0.9\n\n[extra]\nx = 1\n")

    def test_missing_required_key(self):
        with pytest.raises(ConfigurationError, match="beta2"):
            parse_config("[model]\nbeta1 = 1.2\n")

    def test_invalid_toml(self):
        with pytest.raises(ConfigurationError, match="TOML"):
            parse_config("[model\nbeta1 = ")

    def test_missing_file(self):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config("/nonexistent/nowhere.toml")


class TestRunCommand:
    def test_equilibrium_run_files_and_classification(self, tmp_path, monkeypatch):
        cfgfile = tmp_path / "eq.toml"
        cfgfile.write_text(EQUILIBRIUM + f"\n[output]\ndir = '{tmp_path / 'out'}'\n")
        rc = main(["run", str(cfgfile)])
        assert rc == 0
        d = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert d["classification"] == "regular_horizon"
        assert d["cause"] == "horizon"
        frames = (tmp_path / "out" / "frames.csv").read_text().splitlines()
        assert frames[0].startswith("t,delta_x,psi,sup_omega")
        assert len(frames) > 8

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        cfgfile = tmp_path / "eq.toml"
        cfgfile.write_text(EQUILIBRIUM)
        monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "envout"))
        assert main(["run", str(cfgfile)]) == 0
        assert (tmp_path / "envout" / "summary.json").is_file()

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfgfile = tmp_path / "bad.toml"
        cfgfile.write_text("[model]\nbeta1 = 1.2\nbeta2 = 0.9\n\n[data]\nL0 = 0.5\n")
        assert main(["run", str(cfgfile)]) == 2
        assert "1 < L0" in capsys.readouterr().err

    def test_summary_parameters_round_trip(self, tmp_path):
        cfgfile = tmp_path / "eq.toml"
        cfgfile.write_text(EQUILIBRIUM + f"\n[output]\ndir = '{tmp_path / 'out'}'\n")
        assert main(["run", str(cfgfile)]) == 0
        d = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert d["params"]["beta1"] == 1.2
        assert d["params"]["beta2"] == 0.9
        assert d["params"]["gamma1"] == math.log(1.2)
        assert d["params"]["gamma2"] == -math.log(0.9)
        assert d["solver"]["rk_tol"] == 1e-9

    def test_warmup_blowup_classification_and_profile(self, tmp_path):
        cfgfile = tmp_path / "wu.toml"
        cfgfile.write_text(SMALL_WARMUP + f"\n[output]\ndir = '{tmp_path / 'out'}'\nemit_profile = true\n")
        rc = main(["run", str(cfgfile)])
        assert rc == 0
        d = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert d["classification"] == "blowup"
        assert d["cause"] == "omega_cap"
        assert d["T_G"] == pytest.approx(4.2065463, abs=1e-5)
        assert d["checks"]["warmup_g"]["pass"]
        prof = (tmp_path / "out" / "profile.csv").read_text().splitlines()
        assert prof[0] == "z,rho0,phi_final,omega_final,D_final"
        assert len(prof) > 256

    def test_check_subcommand_exit_codes(self, tmp_path, monkeypatch):
        cfgfile = tmp_path / "eq.toml"
        cfgfile.write_text(EQUILIBRIUM + f"\n[output]\ndir = '{tmp_path / 'out'}'\n")
        assert main(["check", str(cfgfile)]) == 0
        # force a failing check through the summary to exercise exit code 4
        from bousslab import diagnostics

        def fail_summary(self):
            return {"omega_consistency": {"pass": False, "max_normalized_deviation": 1.0}}

        monkeypatch.setattr(diagnostics.RunChecks, "summary", fail_summary)
        assert main(["check", str(cfgfile)]) == 4


class TestSweepCommand:
    def test_rows_and_determinism_across_workers(self, tmp_path):
        cfgfile = tmp_path / "sw.toml"
        cfgfile.write_text(SMALL_SWEEP + f"\n[output]\ndir = '{tmp_path / 'o1'}'\n")
        assert main(["sweep", str(cfgfile)]) == 0
        cfg2 = tmp_path / "sw2.toml"
        cfg2.write_text(SMALL_SWEEP + f"\n[output]\ndir = '{tmp_path / 'o2'}'\n")
        assert main(["sweep", str(cfg2), "--workers", "2"]) == 0
        b1 = (tmp_path / "o1" / "sweep.csv").read_bytes()
        b2 = (tmp_path / "o2" / "sweep.csv").read_bytes()
        assert b1 == b2
        lines = b1.decode().splitlines()
        assert lines[0] == "beta1,beta2,classification,T_est,min_K,t_stop,steps"
        assert len(lines) == 3  # header + 2 cells

    def test_empty_grid_rejected(self, tmp_path):
        cfgfile = tmp_path / "sw.toml"
        cfgfile.write_text("[model]\nbeta1 = 1.2\nbeta2 = 0.9\n")
        assert main(["sweep", str(cfgfile)]) == 2


class TestOraclesCommand:
    def test_emits_curve_files(self, tmp_path):
        cfgfile = tmp_path / "eq.toml"
        cfgfile.write_text(
            "[model]\nbeta1 = 1.2\nbeta2 = 0.9\n\n[data]\nmarkers = 128\n"
            "\n[solver]\nt_end = 1e-3\n"
            f"\n[output]\ndir = '{tmp_path / 'out'}'\n"
        )
        assert main(["oracles", str(cfgfile)]) == 0
        out = tmp_path / "out"
        for name in ("oracle_gamma.csv", "oracle_g.csv", "oracle_f.csv", "oracle_tau0.json"):
            assert (out / name).stat().st_size > 0
        tau = json.loads((out / "oracle_tau0.json").read_text())
        assert tau["tau0"] > 0 and tau["residual_rel"] < 1e-12
        g = (out / "oracle_g.csv").read_text().splitlines()
        assert g[0] == "t,G,v" and g[1].startswith("0.0,1.0,0.0")
