"""Command-line interface: artifacts, manifests, seeds, and exit codes."""

import hashlib
import json

import numpy as np
import pytest

from sharekin.cli import main
from sharekin.empirics import read_panel_csv, synthetic_panel, write_panel_csv
from sharekin.engine import SimConfig


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fixture_panel_csv(tmp_path):
    """Two-year panel with exact alpha = 1, c = 0.1 (pairwise +-10% moves)."""
    from test_empirics import exact_pairwise_fixture

    path = tmp_path / "panel.csv"
    write_panel_csv(exact_pairwise_fixture(), path)
    return path


class TestSimulate:
    def test_minimal_run_writes_trajectories_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["simulate", "--sites", "16", "--rho", "4", "--max-tau", "5",
                   "--replicas", "2", "--seed", "11", "--out", str(out)])
        assert rc == 0
        lines = (out / "trajectory_000.csv").read_text().splitlines()
        assert lines[0] == "tau,second_moment"
        assert len(lines) == 7  # header + integer grid 0..5
        assert (out / "trajectory_001.csv").is_file()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seeds"] == {"base_seed": 11, "replica_streams": [0, 1]}
        assert manifest["config"]["resolved_total_units"] == 64
        assert manifest["outputs"] == ["trajectory_000.csv", "trajectory_001.csv"]

    def test_config_sample_grid_triggers_histograms(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"sites": 50, "rho": 5, "max_tau": 8,
                                   "sample_taus": [1, 2, 3, 5, 8],
                                   "replicas": 2, "seed": 7}))
        out = tmp_path / "run"
        rc = main(["simulate", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        names = [f"histogram_tau_{t}.csv" for t in (1, 2, 3, 5, 8)]
        for name in names:
            assert (out / name).is_file()
        rows = np.loadtxt(out / names[-1], delimiter=",", skiprows=1, ndmin=2)
        mass = ((rows[:, 1] - rows[:, 0]) * rows[:, 2]).sum()
        assert mass == pytest.approx(1.0, rel=1e-9)
        manifest = json.loads((out / "manifest.json").read_text())
        assert str(cfg) in manifest["inputs"]

    def test_snapshot_files_only_when_requested(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"sites": 8, "rho": 2, "max_tau": 2,
                                   "snapshot_taus": [0, 2], "seed": 1}))
        out = tmp_path / "snap"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "snapshot_000.csv").read_text().splitlines()
        assert lines[0] == "tau,site,count"
        assert len(lines) == 1 + 2 * 8
        assert not list(out.glob("histogram_*.csv"))

        plain = tmp_path / "plain"
        assert main(["simulate", "--sites", "8", "--rho", "2", "--max-tau", "2",
                     "--seed", "1", "--out", str(plain)]) == 0
        assert not list(plain.glob("snapshot_*.csv"))

    def test_reruns_are_bit_identical(self, tmp_path):
        args = ["simulate", "--sites", "12", "--rho", "3", "--max-tau", "4",
                "--seed", "5"]
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert _sha(a / "trajectory_000.csv") == _sha(b / "trajectory_000.csv")
        assert _sha(a / "manifest.json") == _sha(b / "manifest.json")
        assert main(["simulate", "--sites", "12", "--rho", "3", "--max-tau", "4",
                     "--seed", "6", "--out", str(c)]) == 0
        assert _sha(a / "trajectory_000.csv") != _sha(c / "trajectory_000.csv")

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SHAREKIN_SEED", "99")
        out = tmp_path / "env"
        assert main(["simulate", "--sites", "8", "--rho", "2", "--max-tau", "1",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"]["base_seed"] == 99

    def test_explicit_seed_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SHAREKIN_SEED", "99")
        out = tmp_path / "env"
        assert main(["simulate", "--sites", "8", "--rho", "2", "--max-tau", "1",
                     "--seed", "3", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"]["base_seed"] == 3

    def test_invalid_env_seed_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SHAREKIN_SEED", "not-a-number")
        rc = main(["simulate", "--sites", "8", "--rho", "2",
                   "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_config_errors_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

        unknown = tmp_path / "unknown.json"
        unknown.write_text(json.dumps({"sites": 8, "rho": 2, "bogus": 1}))
        assert main(["simulate", "--config", str(unknown), "--out", str(tmp_path / "o")]) == 2

        collide = tmp_path / "collide.json"
        collide.write_text(json.dumps({"sites": 8, "n_sites": 8, "rho": 2}))
        assert main(["simulate", "--config", str(collide), "--out", str(tmp_path / "o")]) == 2

        assert main(["simulate", "--rho", "2", "--out", str(tmp_path / "o")]) == 2
        assert main(["simulate", "--sites", "1", "--rho", "2",
                     "--out", str(tmp_path / "o")]) == 2


class TestStationary:
    def test_dp_profile_and_phase(self, tmp_path):
        out = tmp_path / "dp"
        rc = main(["stationary", "--sites", "3", "--rho", "1.667", "--units", "5",
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "profile.csv").read_text().splitlines()
        assert lines[0] == "m,p"
        assert len(lines) == 1 + 3  # m = 1..M-N+1 = 1..3
        phase = json.loads((out / "phase.json").read_text())
        assert set(phase) == {"b", "rho", "n_sites", "rho_c", "phase"}

    def test_ctmc_profile(self, tmp_path):
        out = tmp_path / "ctmc"
        rc = main(["stationary", "--sites", "2", "--rho", "3", "--mode", "ctmc",
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "profile.csv").read_text().splitlines()
        assert len(lines) == 1 + 5  # m = 1..5 for N=2, M=6

    def test_fluid_phase_json(self, tmp_path):
        out = tmp_path / "fluid"
        rc = main(["stationary", "--sites", "64", "--rho", "1", "--b", "3",
                   "--out", str(out)])
        assert rc == 0
        phase = json.loads((out / "phase.json").read_text())
        assert phase["phase"] == "fluid"
        assert phase["rho_c"] == pytest.approx(1.3684, abs=1e-3)

    def test_asymptotic_mode(self, tmp_path):
        out = tmp_path / "asym"
        rc = main(["stationary", "--sites", "128", "--rho", "10",
                   "--mode", "asymptotic", "--out", str(out)])
        assert rc == 0
        assert (out / "profile.csv").is_file()

    def test_asymptotic_requires_b2(self, tmp_path):
        rc = main(["stationary", "--sites", "128", "--rho", "10", "--b", "3",
                   "--mode", "asymptotic", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_ctmc_capacity_exit_4(self, tmp_path):
        rc = main(["stationary", "--sites", "10", "--rho", "20", "--mode", "ctmc",
                   "--out", str(tmp_path / "x")])
        assert rc == 4


class TestCalibrate:
    def test_fixture_panel_recovers_time_step(self, tmp_path):
        panel = _fixture_panel_csv(tmp_path)
        out = tmp_path / "cal"
        assert main(["calibrate", "--panel", str(panel), "--out", str(out)]) == 0
        doc = json.loads((out / "calibration.json").read_text())
        assert doc["delta_t_tilde"] == pytest.approx(0.007853981634, rel=1e-6)
        assert doc["scaling"]["alpha"] == pytest.approx(1.0, abs=1e-9)
        assert doc["scaling"]["c"] == pytest.approx(0.1, abs=1e-9)
        assert doc["rho_candidates"] == []
        assert doc["panel_years"] == 1.0

    def test_scans_ensemble_directories(self, tmp_path):
        for rho in (2, 4):
            assert main(["simulate", "--sites", "8", "--rho", str(rho),
                         "--max-tau", "4", "--replicas", "2", "--seed", "5",
                         "--out", str(tmp_path / "ens" / f"rho{rho}")]) == 0
        panel = _fixture_panel_csv(tmp_path)
        out = tmp_path / "cal"
        rc = main(["calibrate", "--panel", str(panel),
                   "--ensembles", str(tmp_path / "ens"), "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "calibration.json").read_text())
        assert [c["rho"] for c in doc["rho_candidates"]] == [2.0, 4.0]
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["inputs"]) == 3  # the panel plus two run manifests

    def test_empty_ensemble_directory_exit_3(self, tmp_path):
        (tmp_path / "ens").mkdir()
        panel = _fixture_panel_csv(tmp_path)
        rc = main(["calibrate", "--panel", str(panel),
                   "--ensembles", str(tmp_path / "ens"), "--out", str(tmp_path / "x")])
        assert rc == 3

    def test_missing_panel_exit_3(self, tmp_path):
        rc = main(["calibrate", "--panel", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "x")])
        assert rc == 3


class TestIngest:
    def test_flows_to_panel_with_dropped_products(self, tmp_path):
        flows = tmp_path / "flows.csv"
        flows.write_text(
            "year,exporter,importer,sitc4,value\n"
            "1962,USA,CAN,x,30\n"
            "1962,FRA,DEU,x,10\n"
            "1962,USA,JPN,y,60\n"
            "1963,USA,CAN,x,10\n")
        out = tmp_path / "ing"
        assert main(["ingest", "--tradeflows", str(flows), "--out", str(out)]) == 0
        assert (out / "dropped.csv").read_text() == "product\ny\n"
        panel = read_panel_csv(out / "panel.csv")
        assert panel.products == ("x",)
        assert np.allclose(panel.shares, 1.0)

    def test_malformed_flows_exit_3(self, tmp_path):
        flows = tmp_path / "flows.csv"
        flows.write_text("year,exporter,importer,sitc4,value\n1962,USA,CAN,x,much\n")
        assert main(["ingest", "--tradeflows", str(flows), "--out", str(tmp_path / "x")]) == 3


class TestPredict:
    def test_panel_scored_against_forecast_ensemble(self, tmp_path):
        panel = synthetic_panel(SimConfig(n_sites=8, density=5.0, max_tau=3.0,
                                          base_seed=21))
        panel_path = tmp_path / "panel.csv"
        write_panel_csv(panel, panel_path)
        out = tmp_path / "pred"
        rc = main(["predict", "--panel", str(panel_path), "--rho", "5",
                   "--replicas", "10", "--seed", "3", "--out", str(out)])
        assert rc == 0
        report = (out / "report.csv").read_text().splitlines()
        assert report[0] == "product,U,mean_excess,excess_var,class"
        assert len(report) == 1 + 8
        assert all(line.split(",")[4] in ("predictable", "unpredictable")
                   for line in report[1:])
        rollup = (out / "rollup.csv").read_text().splitlines()
        assert len(rollup) == 1 + 1 + 1  # prefixes "0" and "00" only
        threshold = json.loads((out / "threshold.json").read_text())
        assert threshold["T"] == 3
        assert threshold["n_mc"] == 100_000
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["outputs"] == ["report.csv", "rollup.csv", "threshold.json"]
        assert manifest["config"]["n_sites"] == 8

    def test_single_year_panel_exit_3(self, tmp_path):
        path = tmp_path / "panel.csv"
        path.write_text("year,product,share\n2000,a,0.5\n2000,b,0.5\n")
        assert main(["predict", "--panel", str(path), "--out", str(tmp_path / "x")]) == 3

    def test_config_site_mismatch_exit_2(self, tmp_path):
        panel = synthetic_panel(SimConfig(n_sites=8, density=5.0, max_tau=2.0,
                                          base_seed=21))
        panel_path = tmp_path / "panel.csv"
        write_panel_csv(panel, panel_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sites": 5}))
        rc = main(["predict", "--panel", str(panel_path), "--config", str(cfg),
                   "--rho", "5", "--replicas", "10", "--out", str(tmp_path / "x")])
        assert rc == 2


def test_version_flag_exits_cleanly():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
