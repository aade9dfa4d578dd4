"""Experiment runner CLI: run, eval, plot-data, oracle.

``run`` executes every (env, seed) of a configured experiment, writing one
content-addressed run directory each plus an experiment-level metrics CSV
and a decile summary.  Completed runs are skipped and partial runs resume
from their stored episodes, so re-invoking with the same config is
idempotent.  When the model-class modes are 'oracle' (default), the
per-environment oracle model is fit first and its bandwidth / noise
precision define the model class every method uses, making methods differ
only in the data they collect.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import artifacts, envs, evaluation, trajopt
from .acquisition import ObjectiveKind
from .config import (ExperimentConfig, config_hash, parse_config,
                     resolved_features, serialize_config)
from .errors import ConfigError, CurioplanError
from .explorer import ExploreSettings, run_random, run_rhc
from .model import ModelSettings

log = logging.getLogger("curioplan")

OUT_ENV_VAR = "CURIOPLAN_OUT"


def model_settings(cfg: ExperimentConfig, env_name: str,
                   class_params: dict | None) -> ModelSettings:
    m = resolved_features(cfg, env_name)
    beta_mode, beta_value = cfg.beta_mode, cfg.beta_value
    bw_mode, bw_value, bw_refit = (cfg.bandwidth_mode, cfg.bandwidth_value,
                                   cfg.bandwidth_refit)
    if cfg.beta_mode == "oracle":
        beta_mode, beta_value = "fixed", class_params["beta"]
    if cfg.bandwidth_mode == "oracle":
        bw_mode, bw_value, bw_refit = "fixed", tuple(class_params["bandwidth"]), False
    return ModelSettings(
        m=m, alpha=cfg.alpha, beta_mode=beta_mode, beta_value=beta_value,
        bandwidth_mode=bw_mode, bandwidth_value=bw_value,
        bandwidth_floor=cfg.bandwidth_floor, bandwidth_refit=bw_refit,
        delta=cfg.target_mode == "delta")


def explore_settings(cfg: ExperimentConfig, env_name: str,
                     class_params: dict | None) -> ExploreSettings:
    solver = trajopt.SolverOptions(
        feas_tol=cfg.solver_feas_tol, grad_tol=cfg.solver_grad_tol,
        max_inner=cfg.solver_max_inner, max_outer=cfg.solver_max_outer)
    return ExploreSettings(
        model=model_settings(cfg, env_name, class_params),
        horizon=cfg.horizon, replan_interval=cfg.replan_interval,
        warm_start=cfg.warm_start, n_candidates=cfg.n_candidates,
        solver=solver, evr_force=cfg.evr_force)


def oracle_class_settings(cfg: ExperimentConfig, env_name: str) -> ModelSettings:
    """Model settings the oracle itself is fit with (never 'oracle' modes)."""
    bw_mode = cfg.bandwidth_mode if cfg.bandwidth_mode != "oracle" else "pairwise"
    beta_mode = cfg.beta_mode if cfg.beta_mode != "oracle" else "refit"
    return ModelSettings(
        m=resolved_features(cfg, env_name), alpha=cfg.alpha,
        beta_mode="fixed" if beta_mode == "fixed" else "refit",
        beta_value=cfg.beta_value, bandwidth_mode=bw_mode,
        bandwidth_value=cfg.bandwidth_value, bandwidth_floor=cfg.bandwidth_floor,
        delta=cfg.target_mode == "delta")


def oracle_path(cfg: ExperimentConfig, env_name: str, root: Path) -> Path:
    tag = f"{env_name}-m{resolved_features(cfg, env_name)}-n{cfg.oracle_samples}" \
          f"-s{cfg.oracle_seed}-{cfg.target_mode}"
    return root / "oracles" / f"{tag}.npz"


def ensure_oracle(cfg: ExperimentConfig, env_name: str, root: Path):
    """Fit (or load) the environment oracle; returns (model, meta)."""
    path = oracle_path(cfg, env_name, root)
    if path.exists():
        return artifacts.load_oracle(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = envs.make_env_spec(env_name)
    t0 = time.perf_counter()
    learned = evaluation.oracle_model(spec, oracle_class_settings(cfg, env_name),
                                      num_samples=cfg.oracle_samples,
                                      seed=cfg.oracle_seed)
    test = evaluation.generate_test_set(spec, cfg.eval_num_traj, cfg.eval_traj_len,
                                        seed=cfg.eval_seed)
    l_oracle = evaluation.mean_log_likelihood(learned, test)
    meta = dict(env=env_name, beta=float(learned.belief.beta),
                bandwidth=[float(v) for v in learned.fmap.bandwidth],
                samples=cfg.oracle_samples, seed=cfg.oracle_seed,
                fit_seconds=round(time.perf_counter() - t0, 3))
    artifacts.save_oracle(path, learned, l_oracle, meta)
    log.info("oracle[%s]: L_oracle=%.4f beta=%.4g (%.1fs)", env_name, l_oracle,
             learned.belief.beta, meta["fit_seconds"])
    return learned, {**meta, "l_oracle": l_oracle}


def execute_run(cfg: ExperimentConfig, env_name: str, seed: int,
                class_params: dict | None, root: Path) -> Path:
    """Run (or resume) one (env, method, seed); returns the run directory."""
    spec = envs.make_env_spec(env_name)
    run_dir = root / artifacts.run_dir_name(env_name, cfg.method, seed, config_hash(cfg))
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(serialize_config(cfg))
    (run_dir / "run_meta.json").write_text(json.dumps(
        dict(env=env_name, method=cfg.method, seed=seed, hash=config_hash(cfg)),
        indent=2, sort_keys=True))

    done = artifacts.completed_episodes(run_dir)
    existing = [r for r in artifacts.read_run_metrics(run_dir)
                if int(r[3]) <= min(done, cfg.episodes)]
    if done >= cfg.episodes and len(existing) >= cfg.episodes:
        log.info("run %s: complete, skipping", run_dir.name)
        return run_dir

    test = evaluation.generate_test_set(spec, cfg.eval_num_traj, cfg.eval_traj_len,
                                        seed=cfg.eval_seed)
    settings = explore_settings(cfg, env_name, class_params)
    solver = settings.solver
    rows = list(existing)

    def want_cost(episode: int) -> bool:
        k = cfg.eval_downstream_interval
        if k < 0:
            return False
        if episode == cfg.episodes:
            return True
        return k > 0 and episode % k == 0

    def on_episode(episode, trajectory, model, wall, converged):
        artifacts.save_episode(run_dir, episode, trajectory, model)
        ll = evaluation.mean_log_likelihood(model, test)
        cost = None
        if want_cost(episode):
            cost = evaluation.downstream_cost(model, spec, horizon=cfg.horizon,
                                              solver=solver, seed=cfg.eval_seed)
        rows.append((env_name, cfg.method, str(seed), str(episode),
                     artifacts.fmt(ll), artifacts.fmt(cost), artifacts.fmt(wall)))
        artifacts.write_run_metrics_raw(run_dir, rows)
        if not converged:
            log.warning("run %s ep%d: planner did not converge", run_dir.name, episode)

    history = [artifacts.load_episode_trajectory(run_dir, i, planned=cfg.method != "rand")
               for i in range(1, min(done, cfg.episodes) + 1)]
    t0 = time.perf_counter()
    if cfg.method == "rand":
        run_random(spec, cfg.episodes, seed, settings, history=history,
                   on_episode=on_episode)
    else:
        kind = ObjectiveKind(cfg.method.split("-", 1)[1])
        run_rhc(spec, kind, cfg.episodes, seed, settings, history=history,
                on_episode=on_episode)
    log.info("run %s: %d episodes in %.1fs", run_dir.name, cfg.episodes,
             time.perf_counter() - t0)
    return run_dir


def _pool_entry(args):
    cfg, env_name, seed, class_params, root = args
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    return str(execute_run(cfg, env_name, seed, class_params, Path(root)))


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every (env, seed) of the experiment; returns the output root."""
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    class_by_env = {}
    for env_name in cfg.envs:
        needs_oracle = "oracle" in (cfg.beta_mode, cfg.bandwidth_mode)
        if needs_oracle:
            _, meta = ensure_oracle(cfg, env_name, root)
            class_by_env[env_name] = dict(beta=meta["beta"], bandwidth=meta["bandwidth"])
        else:
            class_by_env[env_name] = None

    jobs = [(cfg, env_name, seed, class_by_env[env_name], str(root))
            for env_name in cfg.envs for seed in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(_pool_entry, jobs))
    else:
        for job in jobs:
            _pool_entry(job)

    artifacts.write_metrics(root)
    metrics_rows = artifacts.read_metrics(root / "metrics.csv")
    (root / "summary.csv").write_text(artifacts.summarize(metrics_rows))
    return root


def reevaluate(cfg: ExperimentConfig) -> Path:
    """Recompute metrics rows for existing run dirs from stored snapshots."""
    root = Path(cfg.out)
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        meta_path = sub / "run_meta.json"
        if not meta_path.exists():
            continue
        meta = json.loads(meta_path.read_text())
        spec = envs.make_env_spec(meta["env"])
        test = evaluation.generate_test_set(spec, cfg.eval_num_traj, cfg.eval_traj_len,
                                            seed=cfg.eval_seed)
        solver = trajopt.SolverOptions(
            feas_tol=cfg.solver_feas_tol, grad_tol=cfg.solver_grad_tol,
            max_inner=cfg.solver_max_inner, max_outer=cfg.solver_max_outer)
        n_eps = artifacts.completed_episodes(sub)
        old_wall = {int(r[3]): r[6] for r in artifacts.read_run_metrics(sub)}
        rows = []
        for episode in range(1, n_eps + 1):
            from .model import load_model
            model = load_model(artifacts.episode_paths(sub, episode)[2])
            ll = evaluation.mean_log_likelihood(model, test)
            cost = None
            k = cfg.eval_downstream_interval
            if k >= 0 and (episode == n_eps or (k > 0 and episode % k == 0)):
                cost = evaluation.downstream_cost(model, spec, horizon=cfg.horizon,
                                                  solver=solver, seed=cfg.eval_seed)
            rows.append((meta["env"], meta["method"], str(meta["seed"]), str(episode),
                         artifacts.fmt(ll), artifacts.fmt(cost),
                         old_wall.get(episode, "")))
        artifacts.write_run_metrics_raw(sub, rows)
        log.info("re-evaluated %s (%d episodes)", sub.name, n_eps)
    artifacts.write_metrics(root)
    metrics_rows = artifacts.read_metrics(root / "metrics.csv")
    (root / "summary.csv").write_text(artifacts.summarize(metrics_rows))
    return root


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curioplan",
        description="Curiosity-driven trajectory planning experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", "-c", help="experiment config file")
        p.add_argument("--env", help="comma-separated environment list")
        p.add_argument("--method", help="rhc-us | rhc-evr | rand")
        p.add_argument("--seeds", help="e.g. 0,1,2 or 0:10")
        p.add_argument("--episodes", type=int)
        p.add_argument("--out", help=f"output root (default ${OUT_ENV_VAR} or ./runs)")
        p.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override any config key")

    for verb in ("run", "eval", "oracle"):
        common(sub.add_parser(verb))
    plot = sub.add_parser("plot-data")
    plot.add_argument("--metrics", required=True, help="metrics CSV path")
    plot.add_argument("--out", required=True, help="directory for plot data files")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = list(args.sets)
    if args.env:
        overrides.append(f"env={args.env}")
    if args.method:
        overrides.append(f"method={args.method}")
    if args.seeds:
        overrides.append(f"seeds={args.seeds}")
    if args.episodes is not None:
        overrides.append(f"episodes={args.episodes}")
    out = args.out or os.environ.get(OUT_ENV_VAR)
    if out:
        overrides.append(f"out={out}")
    return parse_config(args.config, overrides)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "plot-data":
            written = artifacts.emit_plot_data(Path(args.metrics), Path(args.out))
            for path in written:
                print(path)
            return 0
        cfg = _config_from_args(args)
        if args.verb == "run":
            root = run_experiment(cfg)
            print(f"metrics: {root / 'metrics.csv'}")
            return 0
        if args.verb == "eval":
            root = reevaluate(cfg)
            print(f"metrics: {root / 'metrics.csv'}")
            return 0
        if args.verb == "oracle":
            root = Path(cfg.out)
            root.mkdir(parents=True, exist_ok=True)
            for env_name in cfg.envs:
                _, meta = ensure_oracle(cfg, env_name, root)
                print(f"{env_name}: L_oracle={meta['l_oracle']:.4f} "
                      f"beta={meta['beta']:.4g}")
            return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (CurioplanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
