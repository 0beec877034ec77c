"""Tests for the experiment runner: config validation, artifacts, exit codes.

Runner scenarios use deliberately short horizons so the whole module stays
fast; the physics itself is covered by the module tests and the acceptance
suite.
"""

import json
import math

import pytest

from canardctl.cli import (
    ExperimentConfig,
    main,
    read_trajectory_csv,
    run_experiment,
    _write_trajectory_csv,
)
from canardctl.core import PhasePoint
from canardctl.errors import ConfigError
from canardctl.sim import Trajectory


class TestConfigValidation:
    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="unknown experiment"):
            ExperimentConfig("warp-drive")

    def test_raw_h_rejected_with_guidance(self):
        with pytest.raises(ConfigError, match="h0"):
            ExperimentConfig("k2", {"h": 1e-180})

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError, match="unknown parameter"):
            ExperimentConfig("k2", {"c3": 1.0})

    def test_pattern_must_be_string(self):
        with pytest.raises(ConfigError, match="string"):
            ExperimentConfig("vdp-mmo", {"pattern": 3})

    def test_repeat_must_be_integer(self):
        with pytest.raises(ConfigError, match="integer"):
            ExperimentConfig("vdp-mmo", {"repeat": 2.0})
        with pytest.raises(ConfigError, match="integer"):
            ExperimentConfig("vdp-mmo", {"repeat": True})

    def test_numeric_params_reject_bool_nan_string(self):
        with pytest.raises(ConfigError, match="number"):
            ExperimentConfig("k2", {"c1": True})
        with pytest.raises(ConfigError, match="finite"):
            ExperimentConfig("k2", {"c1": float("nan")})
        with pytest.raises(ConfigError, match="number"):
            ExperimentConfig("k2", {"c1": "big"})

    def test_output_slots_checked(self):
        with pytest.raises(ConfigError, match="output slot"):
            ExperimentConfig("k2", outputs={"video": "x.mp4"})
        with pytest.raises(ConfigError, match="name a file"):
            ExperimentConfig("k2", outputs={"metrics": ""})

    def test_initial_conditions_coerced_and_checked(self):
        cfg = ExperimentConfig("k2", initial_conditions=[[1, 2], (0.5, -1)])
        assert cfg.initial_conditions == (PhasePoint(1.0, 2.0), PhasePoint(0.5, -1.0))
        with pytest.raises(ConfigError, match="non-finite"):
            ExperimentConfig("k2", initial_conditions=[(math.inf, 0.0)])


class TestConfigFile:
    def test_round_trip_all_sections(self, tmp_path):
        doc = {
            "experiment": "fold-fast",
            "params": {"eps": 0.02, "c1": 2.0},
            "initial_conditions": [[0.1, 0.2]],
            "outputs": {"metrics": "m.json"},
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(doc))
        cfg = ExperimentConfig.from_file(p)
        assert cfg.experiment == "fold-fast"
        assert cfg.params == {"eps": 0.02, "c1": 2.0}
        assert cfg.initial_conditions == (PhasePoint(0.1, 0.2),)
        assert cfg.outputs == {"metrics": "m.json"}

    def test_malformed_inputs(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="valid JSON"):
            ExperimentConfig.from_file(p)
        p.write_text(json.dumps({"params": {}}))
        with pytest.raises(ConfigError, match="experiment"):
            ExperimentConfig.from_file(p)
        p.write_text(json.dumps({"experiment": "k2", "extras": 1}))
        with pytest.raises(ConfigError, match="sections"):
            ExperimentConfig.from_file(p)
        p.write_text(json.dumps({"experiment": "k2", "initial_conditions": [3]}))
        with pytest.raises(ConfigError, match="pairs"):
            ExperimentConfig.from_file(p)
        with pytest.raises(ConfigError, match="cannot read"):
            ExperimentConfig.from_file(tmp_path / "absent.json")

    def test_with_overrides_wins_and_preserves_original(self):
        cfg = ExperimentConfig("k2", {"c1": 1.0, "eps": 0.5})
        out = cfg.with_overrides({"c1": 7.0, "t_end": 10.0})
        assert out.params == {"c1": 7.0, "eps": 0.5, "t_end": 10.0}
        assert cfg.params["c1"] == 1.0


class TestTrajectoryCsv:
    def test_round_trip_full_precision(self, tmp_path):
        ts = (0.0, 1.0 / 3.0, math.pi)
        pts = (PhasePoint(1e-300, -2.5), PhasePoint(0.1 + 0.2, 4.0),
               PhasePoint(-1.5e208, math.sqrt(2.0)))
        us = (7.0, -1.0 / 7.0, 0.0)
        path = tmp_path / "trajectory.csv"
        _write_trajectory_csv(path, Trajectory(ts, pts, us))
        rows = read_trajectory_csv(path)
        assert rows == tuple(
            (t, p.x, p.y, u) for t, p, u in zip(ts, pts, us))

    def test_header_validated(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError, match="not a trajectory file"):
            read_trajectory_csv(p)


class TestRunExperiment:
    def test_k2_artifacts_and_config_echo(self, tmp_path):
        cfg = ExperimentConfig("k2", {"t_end": 120.0},
                               outputs={"metrics": "renamed.json"})
        assert run_experiment(cfg, tmp_path) == 0
        for name in ("trajectory.csv", "phase.svg", "controller.svg",
                     "renamed.json"):
            assert (tmp_path / name).exists()
        m = json.loads((tmp_path / "renamed.json").read_text())
        assert m["status"] == "ok"
        assert m["experiment"] == "k2"
        # resolved config makes the run reproducible from the metrics alone
        echoed = m["config"]["params"]
        assert echoed["t_end"] == 120.0
        assert {"eps", "alpha", "c1", "c2", "h0", "E"} <= set(echoed)
        assert m["config"]["outputs"]["metrics"] == "renamed.json"
        assert m["results"]["max_terminal_h_gap"] < 1e-6

    def test_trajectory_csv_parses_back(self, tmp_path):
        cfg = ExperimentConfig("k2", {"t_end": 120.0})
        run_experiment(cfg, tmp_path)
        rows = read_trajectory_csv(tmp_path / "trajectory.csv")
        assert len(rows) > 10
        assert all(len(r) == 4 for r in rows)

    def test_unwritable_outdir_exits_2(self, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        cfg = ExperimentConfig("k2")
        assert run_experiment(cfg, blocker / "out") == 2
        assert "not writable" in capsys.readouterr().err

    def test_integration_fault_exits_3(self, tmp_path, capsys):
        cfg = ExperimentConfig("k1-vdp", {"t_end": 10.0})
        assert run_experiment(cfg, tmp_path) == 3
        assert "never reached" in capsys.readouterr().err

    def test_pattern_deviation_exits_4_with_diagnostics(self, tmp_path, capsys):
        cfg = ExperimentConfig(
            "vdp-canard",
            {"x_star": 0.01, "y_h": 0.75,
             "beta1": 1e-3, "beta2": 1e-3, "y_min": 0.02})
        assert run_experiment(cfg, tmp_path) == 4
        assert "deviation" in capsys.readouterr().err
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert m["status"] == "pattern-deviation"
        assert m["results"]["expected"] == "LAO"
        assert m["results"]["got"] == "SAO"
        assert (tmp_path / "trajectory.csv").exists()


def _write_cfg(path, experiment, **params):
    path.write_text(json.dumps({"experiment": experiment, "params": params}))
    return path


class TestMain:
    def test_run_with_flag_override(self, tmp_path):
        cfg = _write_cfg(tmp_path / "a.json", "k2", t_end=120.0)
        out = tmp_path / "out"
        rc = main(["run", str(cfg), "--out", str(out), "--c1", "3.0"])
        assert rc == 0
        m = json.loads((out / "metrics.json").read_text())
        assert m["config"]["params"]["c1"] == 3.0

    def test_batch_two_jobs_separate_outdirs(self, tmp_path):
        a = _write_cfg(tmp_path / "a.json", "k2", t_end=120.0)
        b = _write_cfg(tmp_path / "b.json", "k2", t_end=150.0)
        base = tmp_path / "batch"
        rc = main(["run", str(a), str(b), "--jobs", "2",
                   "--out", str(base)])
        assert rc == 0
        assert (base / "a" / "metrics.json").exists()
        assert (base / "b" / "metrics.json").exists()

    def test_batch_duplicate_stems_rejected(self, tmp_path, capsys):
        d1 = tmp_path / "one"
        d2 = tmp_path / "two"
        d1.mkdir(), d2.mkdir()
        a = _write_cfg(d1 / "run.json", "k2", t_end=120.0)
        b = _write_cfg(d2 / "run.json", "k2", t_end=120.0)
        assert main(["run", str(a), str(b), "--out", str(tmp_path / "o")]) == 2
        assert "distinct" in capsys.readouterr().err

    def test_batch_worst_exit_code_wins(self, tmp_path):
        good = _write_cfg(tmp_path / "good.json", "k2", t_end=120.0)
        bad = _write_cfg(tmp_path / "bad.json", "k1-vdp", t_end=10.0)
        rc = main(["run", str(good), str(bad), "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_invalid_config_file_exits_2(self, tmp_path, capsys):
        p = tmp_path / "broken.json"
        p.write_text(json.dumps({"experiment": "k2", "params": {"h": 0.1}}))
        assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
        assert "h0" in capsys.readouterr().err

    def test_mmo_subcommand(self, tmp_path):
        out = tmp_path / "mmo"
        rc = main(["mmo", "--pattern", "2S:1.25:-0.01", "--eps", "0.01",
                   "--out", str(out)])
        assert rc == 0
        m = json.loads((out / "metrics.json").read_text())
        assert m["results"]["labels"] == "SS"
        assert m["config"]["params"]["pattern"] == "2S:1.25:-0.01"

    def test_verify_subcommand(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "15/15" in out
