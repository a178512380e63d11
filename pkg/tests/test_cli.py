"""Scenario validation, run emission, reproducibility, and the CLI surface."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from shockrep.cli import main
from shockrep.errors import ConfigError
from shockrep.scenarios import (canonical_json, load_config, load_preset,
                                parse_scenario, preset_names, run_scenario)

GOOD = {
    "name": "unit",
    "seed": 7,
    "game": {"kind": "constant", "payoffs": [[1.0, 0.0]]},
    "noise": {"kind": "per_strategy", "sigma": [0.5, 0.5]},
    "dynamics": "srd",
    "x0": [0.5, 0.5],
    "integrator": {"dt": 1e-3, "horizon": 0.2, "record_stride": 50},
    "paths": 8,
    "analyses": [{"kind": "survival", "strategy": 0, "threshold": 1e-3}],
}


def cfg(**overrides):
    out = json.loads(json.dumps(GOOD))
    out.update(overrides)
    return out


class TestValidation:
    def test_good_config_parses(self):
        sc = parse_scenario(cfg())
        assert sc.paths == 8 and sc.game.dim == 2

    def test_missing_seed(self):
        bad = cfg()
        del bad["seed"]
        with pytest.raises(ConfigError, match="seed"):
            parse_scenario(bad)

    def test_error_names_offending_field(self):
        with pytest.raises(ConfigError, match="noise.kind"):
            parse_scenario(cfg(dynamics="mutation"))
        with pytest.raises(ConfigError, match="dynamics"):
            parse_scenario(cfg(dynamics="waves"))
        with pytest.raises(ConfigError, match="paths"):
            parse_scenario(cfg(paths=0))
        with pytest.raises(ConfigError, match="x0"):
            parse_scenario(cfg(x0=[0.5, 0.6]))
        with pytest.raises(ConfigError, match="integrator"):
            parse_scenario(cfg(integrator={"dt": -1.0, "horizon": 1.0}))

    def test_kind_compatibility_rejected_before_compute(self):
        bad = cfg(noise={"kind": "matrix_entry", "sigma": [[1, 1], [1, 1]]})
        with pytest.raises(ConfigError, match="matrix"):
            parse_scenario(bad)
        bad2 = cfg(dynamics="bimatrix")
        with pytest.raises(ConfigError, match="noise.kind"):
            parse_scenario(bad2)

    def test_log_scheme_only_for_srd(self):
        bad = cfg(dynamics="aggregate")
        bad["integrator"] = dict(bad["integrator"], scheme="log_y")
        with pytest.raises(ConfigError, match="scheme"):
            parse_scenario(bad)

    def test_unknown_analysis(self):
        with pytest.raises(ConfigError, match="analyses"):
            parse_scenario(cfg(analyses=[{"kind": "sorcery"}]))

    def test_hitting_scenario(self):
        sc = parse_scenario({"type": "hitting", "seed": 1, "a": 1.0, "b": 1.0,
                             "horizon": 10.0, "dt": 1e-3, "paths": 10})
        assert sc.type == "hitting"


class TestRunEmission:
    def test_outputs_and_manifest(self, tmp_path):
        man = run_scenario(cfg(), out_dir=str(tmp_path / "run"))
        assert set(man.files) == {"terminal.csv", "reports.json", "config.json"}
        for name, meta in man.files.items():
            path = tmp_path / "run" / name
            assert path.exists()
            assert meta["bytes"] == path.stat().st_size
        reports = json.loads((tmp_path / "run" / "reports.json").read_text())
        kinds = [r["kind"] for r in reports]
        assert kinds == ["summary", "survival"]
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["config_hash"] == man.config_hash
        assert manifest["seed"] == 7

    def test_byte_identical_reruns(self, tmp_path):
        m1 = run_scenario(cfg(save_snapshots=True), out_dir=str(tmp_path / "a"))
        m2 = run_scenario(cfg(save_snapshots=True), out_dir=str(tmp_path / "b"))
        assert m1.files.keys() == m2.files.keys()
        for name in m1.files:
            assert m1.files[name]["sha256"] == m2.files[name]["sha256"], name

    def test_different_seed_different_data(self, tmp_path):
        m1 = run_scenario(cfg(), out_dir=str(tmp_path / "a"))
        m2 = run_scenario(cfg(seed=8), out_dir=str(tmp_path / "b"))
        assert m1.files["terminal.csv"]["sha256"] != \
            m2.files["terminal.csv"]["sha256"]

    def test_snapshot_persistence_round_trip(self, tmp_path):
        run_scenario(cfg(save_snapshots=True), out_dir=str(tmp_path / "run"))
        raw = np.genfromtxt(tmp_path / "run" / "snapshots.csv", delimiter=",",
                            names=True)
        assert set(raw.dtype.names) == {"path", "t", "x_p0_0", "x_p0_1"}
        assert raw["path"].max() == 7.0

    def test_stability_analysis_wires_ref_tracking(self, tmp_path):
        config = cfg(analyses=[{"kind": "stability", "target": [1.0, 0.0],
                                "radius": 0.5, "delta_conv": 1e-2}])
        config["game"]["payoffs"] = [[1.0, 0.0]]
        run_scenario(config, out_dir=str(tmp_path / "run"))
        reports = json.loads((tmp_path / "run" / "reports.json").read_text())
        stab = [r for r in reports if r["kind"] == "stability"][0]
        assert 0.0 <= stab["converging_fraction"] <= stab["staying_fraction"]

    def test_env_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SHOCKREP_OUT", str(tmp_path / "root"))
        man = run_scenario(cfg())
        assert (tmp_path / "root" / "unit" / "terminal.csv").exists()
        assert man.name == "unit"


class TestPresets:
    def test_all_presets_parse(self):
        names = preset_names()
        assert {"pure-noise-srd", "thm31-extinction", "thm33-strict-stability",
                "remark35-non-nash", "thm41-quadratic", "lemmaA2-hitting",
                "stratonovich-identity"} <= set(names)
        for name in names:
            parse_scenario(load_preset(name))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            load_preset("does-not-exist")

    def test_load_config_prefers_path(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(canonical_json(cfg()))
        assert load_config(str(path))["name"] == "unit"
        assert load_config("pure-noise-srd")["name"] == "pure-noise-srd"


class TestCli:
    def test_ensemble_and_analyze(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps(cfg()))
        rc = main(["ensemble", str(path), "--out", str(tmp_path / "run")])
        assert rc == 0
        rc = main(["analyze", str(tmp_path / "run"), "survival",
                   "--strategy", "1", "--threshold", "1e-3"])
        assert rc == 0

    def test_simulate_writes_trajectory(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps(cfg()))
        rc = main(["simulate", str(path), "--out", str(tmp_path / "run"),
                   "--horizon", "0.1"])
        assert rc == 0
        header = (tmp_path / "run" / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,x_p0_0,x_p0_1"

    def test_overrides_apply(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps(cfg()))
        rc = main(["ensemble", str(path), "--seed", "99", "--paths", "3",
                   "--out", str(tmp_path / "run")])
        assert rc == 0
        saved = json.loads((tmp_path / "run" / "config.json").read_text())
        assert saved["seed"] == 99 and saved["paths"] == 3

    def test_validation_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        bad = cfg()
        del bad["seed"]
        path.write_text(json.dumps(bad))
        assert main(["ensemble", str(path)]) == 1
        assert "seed" in capsys.readouterr().err

    def test_presets_list(self, capsys):
        assert main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        assert "lemmaA2-hitting" in out

    def test_hitprob_command(self, capsys):
        rc = main(["hitprob", "--a", "1", "--b", "-0.5", "--horizon", "20",
                   "--paths", "200", "--seed", "3"])
        assert rc == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["estimate"] >= 0.99

    def test_entry_point_help(self):
        out = subprocess.run([sys.executable, "-m", "shockrep.cli", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert "verify" in out.stdout

    def test_analyze_without_snapshots_fails_cleanly(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps(cfg()))
        main(["ensemble", str(path), "--out", str(tmp_path / "run")])
        rc = main(["analyze", str(tmp_path / "run"), "martingale",
                   "--strategy", "0", "--t", "0.1"])
        assert rc == 1
