"""Configuration parsing, the experiment runner, artifacts, and plot data."""

import csv
from pathlib import Path

import numpy as np
import pytest

from curioplan import artifacts, cli
from curioplan.config import (ExperimentConfig, config_hash, parse_config,
                              serialize_config)
from curioplan.errors import ConfigError

# small, fast experiment shared by the runner tests
FAST_OVERRIDES = [
    "env=mountain_car", "method=rhc-us", "episodes=2", "seeds=0,1",
    "model.features=8", "beta.mode=fixed", "beta.value=10000",
    "bandwidth.mode=fixed", "bandwidth.value=0.6,0.05,0.7",
    "bandwidth.refit=false", "plan.candidates=6",
    "solver.max_inner=60", "solver.max_outer=4", "eval.num_traj=10",
    "eval.downstream_interval=0", "workers=1",
]


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(None, ["env=pendulum", "method=rhc-us"])
        assert cfg.envs == ("pendulum",)
        assert cfg.episodes == 20
        assert cfg.seeds == (0,)
        from curioplan.config import resolved_features
        assert resolved_features(cfg, "pendulum") == 90

    def test_feature_defaults_per_env(self):
        from curioplan.config import resolved_features
        cfg = parse_config(None, ["env=mountain_car,pendulum,cartpole"])
        assert [resolved_features(cfg, e) for e in cfg.envs] == [20, 90, 80]

    def test_evr_gate_rejected(self):
        with pytest.raises(ConfigError, match="gated"):
            parse_config(None, ["env=pendulum", "method=rhc-evr"])

    def test_evr_gate_forced(self):
        cfg = parse_config(None, ["env=pendulum", "method=rhc-evr",
                                  "plan.evr_force=true"])
        assert cfg.evr_force

    def test_evr_allowed_on_small_model(self):
        cfg = parse_config(None, ["env=mountain_car", "method=rhc-evr"])
        assert cfg.method == "rhc-evr"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config(None, ["bogus.key=1"])

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="episodes"):
            parse_config(None, ["episodes=soon"])

    def test_unknown_env(self):
        with pytest.raises(ConfigError, match="unknown environment"):
            parse_config(None, ["env=acrobot"])

    def test_seed_ranges(self):
        cfg = parse_config(None, ["seeds=0:3,7"])
        assert cfg.seeds == (0, 1, 2, 7)

    def test_file_with_comments(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("# experiment\nenv = cartpole\nepisodes = 5  # short\n")
        cfg = parse_config(path)
        assert cfg.envs == ("cartpole",)
        assert cfg.episodes == 5

    def test_round_trip(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES)
        path = tmp_path / "round.cfg"
        path.write_text(serialize_config(cfg))
        again = parse_config(path)
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)

    def test_hash_ignores_out_dir(self):
        a = parse_config(None, ["out=runs_a"])
        b = parse_config(None, ["out=runs_b"])
        assert config_hash(a) == config_hash(b)
        c = parse_config(None, ["episodes=7"])
        assert config_hash(a) != config_hash(c)


class TestRunExperiment:
    def test_artifacts_and_metrics(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'runs'}"])
        root = cli.run_experiment(cfg)
        run_dirs = [p for p in root.iterdir() if p.is_dir() and p.name != "oracles"]
        assert len(run_dirs) == 2  # one per seed
        for rd in run_dirs:
            assert (rd / "config.txt").exists()
            assert artifacts.completed_episodes(rd) == 2
        rows = artifacts.read_metrics(root / "metrics.csv")
        assert len(rows) == 4  # 1 env x 1 method x 2 seeds x 2 episodes
        # downstream interval 0: cost only on the final episode
        assert all(r["downstream_cost"] is None for r in rows if r["episode"] == 1)
        assert all(r["downstream_cost"] is not None for r in rows if r["episode"] == 2)
        assert (root / "summary.csv").exists()

    def test_rerun_is_idempotent_and_byte_identical(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'runs'}"])
        root = cli.run_experiment(cfg)
        first = (root / "metrics.csv").read_bytes()
        cli.run_experiment(cfg)
        assert (root / "metrics.csv").read_bytes() == first

    def test_fresh_rerun_reproduces_model_metrics(self, tmp_path):
        cfg_a = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'a'}"])
        cfg_b = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'b'}"])
        ra = cli.run_experiment(cfg_a)
        rb = cli.run_experiment(cfg_b)
        # deterministic modulo the wall-time measurement column
        a = artifacts.collect_metrics(ra, include_wall_time=False)
        b = artifacts.collect_metrics(rb, include_wall_time=False)
        assert a == b

    def test_resume_after_deleting_episode(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'runs'}"])
        root = cli.run_experiment(cfg)
        baseline = artifacts.collect_metrics(root, include_wall_time=False)
        run_dirs = [p for p in root.iterdir() if p.is_dir() and p.name != "oracles"]
        victim = sorted(run_dirs)[0]
        for path in artifacts.episode_paths(victim, 2):
            if path.exists():
                path.unlink()
        rows = [r for r in artifacts.read_run_metrics(victim) if int(r[3]) <= 1]
        artifacts.write_run_metrics_raw(victim, rows)
        cli.run_experiment(cfg)
        assert artifacts.completed_episodes(victim) == 2
        assert artifacts.collect_metrics(root, include_wall_time=False) == baseline


class TestPlotData:
    def test_quantiles_match_sort_oracle(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES
                           + ["seeds=0,1,2", f"out={tmp_path / 'runs'}"])
        root = cli.run_experiment(cfg)
        out = tmp_path / "plots"
        written = artifacts.emit_plot_data(root / "metrics.csv", out)
        names = {p.name for p in written}
        assert "mountain_car_log_lik.csv" in names
        rows = artifacts.read_metrics(root / "metrics.csv")
        lls = sorted(r["mean_log_lik"] for r in rows if r["episode"] == 2)
        with open(out / "mountain_car_log_lik.csv") as fh:
            table = list(csv.DictReader(fh))
        got = [r for r in table if r["episode"] == "2"][0]
        # type-7 quantiles by hand on the sorted sample of 3 values
        assert float(got["rhc-us_median"]) == pytest.approx(lls[1])
        assert float(got["rhc-us_d1"]) == pytest.approx(
            lls[0] + 0.2 * (lls[1] - lls[0]))
        assert float(got["rhc-us_d9"]) == pytest.approx(
            lls[1] + 0.8 * (lls[2] - lls[1]))

    def test_single_seed_degenerate_band(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES + ["seeds=0", f"out={tmp_path / 'r'}"])
        root = cli.run_experiment(cfg)
        out = tmp_path / "plots"
        artifacts.emit_plot_data(root / "metrics.csv", out)
        with open(out / "mountain_car_log_lik.csv") as fh:
            table = list(csv.DictReader(fh))
        for row in table:
            assert row["rhc-us_median"] == row["rhc-us_d1"] == row["rhc-us_d9"]

    def test_row_count(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'runs'}"])
        root = cli.run_experiment(cfg)
        out = tmp_path / "plots"
        artifacts.emit_plot_data(root / "metrics.csv", out)
        with open(out / "mountain_car_log_lik.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2  # one per episode


class TestEvalVerb:
    def test_reevaluate_reproduces_rows(self, tmp_path):
        cfg = parse_config(None, FAST_OVERRIDES + [f"out={tmp_path / 'runs'}"])
        root = cli.run_experiment(cfg)
        before = artifacts.collect_metrics(root, include_wall_time=False)
        cli.reevaluate(cfg)
        after = artifacts.collect_metrics(root, include_wall_time=False)
        assert after == before


class TestMainEntry:
    def test_run_and_plot_verbs(self, tmp_path, capsys):
        out = tmp_path / "runs"
        rc = cli.main(["run", "--env", "mountain_car", "--method", "rand",
                       "--seeds", "0", "--episodes", "2",
                       "--out", str(out),
                       "--set", "model.features=8",
                       "--set", "beta.mode=fixed", "--set", "beta.value=10000",
                       "--set", "bandwidth.mode=fixed",
                       "--set", "bandwidth.value=0.6,0.05,0.7",
                       "--set", "bandwidth.refit=false",
                       "--set", "eval.num_traj=10",
                       "--set", "eval.downstream_interval=0"])
        assert rc == 0
        assert (out / "metrics.csv").exists()
        rc = cli.main(["plot-data", "--metrics", str(out / "metrics.csv"),
                       "--out", str(tmp_path / "plots")])
        assert rc == 0

    def test_config_error_exit_code(self, capsys):
        rc = cli.main(["run", "--set", "bogus=1"])
        assert rc == 2
        assert "configuration error" in capsys.readouterr().err
