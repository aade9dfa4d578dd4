"""Run-directory layout, metrics CSV, and plot-data export.

Every (env, method, seed) run owns one directory, content-addressed by the
config hash, holding a verbatim config snapshot, per-episode trajectory
CSVs, planned-trajectory CSVs, model snapshots, and that run's metrics
rows.  The experiment-level ``metrics.csv`` is regenerated from the run
directories and sorted, so reruns and worker scheduling cannot change its
bytes.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from . import model as model_mod
from .explorer import Trajectory

METRICS_HEADER = "# curioplan metrics schema v1: one row per (run, episode)\n"
METRICS_COLUMNS = ("env", "method", "seed", "episode", "mean_log_lik",
                   "downstream_cost", "wall_time_s")


def fmt(value) -> str:
    """Shortest round-trip decimal form; empty for missing values."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    return repr(float(value))


def run_dir_name(env: str, method: str, seed: int, cfg_hash: str) -> str:
    return f"{env}-{method}-s{seed}-{cfg_hash}"


def episode_paths(run_dir: Path, episode: int):
    stem = f"ep{episode:03d}"
    return (run_dir / f"{stem}_trajectory.csv",
            run_dir / f"{stem}_planned.csv",
            run_dir / f"{stem}_model.npz")


def save_episode(run_dir: Path, episode: int, trajectory: Trajectory, learned):
    traj_path, plan_path, model_path = episode_paths(run_dir, episode)
    obs_dim = trajectory.observations.shape[1]
    act_dim = trajectory.actions.shape[1]
    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"obs{i}" for i in range(obs_dim)]
                        + [f"act{i}" for i in range(act_dim)] + ["divergence"])
        for t in range(trajectory.observations.shape[0]):
            act_cells = ([fmt(v) for v in trajectory.actions[t]]
                         if t < len(trajectory) else [""] * act_dim)
            div = ""
            if trajectory.divergence is not None and 0 < t <= len(trajectory.divergence):
                div = fmt(trajectory.divergence[t - 1])
            writer.writerow([t] + [fmt(v) for v in trajectory.observations[t]]
                            + act_cells + [div])
    if trajectory.planned_actions is not None:
        with open(plan_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"act{i}" for i in range(act_dim)]
                            + [f"state{i}" for i in range(obs_dim)])
            planned_states = trajectory.planned_states
            for t in range(trajectory.planned_actions.shape[0]):
                srow = ([fmt(v) for v in planned_states[t]]
                        if planned_states is not None and t < planned_states.shape[0]
                        else [""] * obs_dim)
                writer.writerow([t] + [fmt(v) for v in trajectory.planned_actions[t]]
                                + srow)
    model_mod.save_model(model_path, learned)


def load_episode_trajectory(run_dir: Path, episode: int, planned: bool) -> Trajectory:
    traj_path, plan_path, _ = episode_paths(run_dir, episode)
    rows = list(csv.reader(open(traj_path)))
    header, body = rows[0], rows[1:]
    obs_dim = sum(1 for h in header if h.startswith("obs"))
    act_dim = sum(1 for h in header if h.startswith("act"))
    obs = np.array([[float(v) for v in r[1:1 + obs_dim]] for r in body])
    acts = [r[1 + obs_dim:1 + obs_dim + act_dim] for r in body[:-1]]
    actions = np.array([[float(v) for v in r] for r in acts]) if acts else \
        np.empty((0, act_dim))
    divergence = None
    planned_actions = planned_states = None
    if plan_path.exists():
        prow = list(csv.reader(open(plan_path)))
        pbody = prow[1:]
        planned_actions = np.array([[float(v) for v in r[1:1 + act_dim]] for r in pbody])
        svals = [r[1 + act_dim:1 + act_dim + obs_dim] for r in pbody]
        if svals and all(v != "" for v in svals[0]):
            planned_states = np.array([[float(v) for v in r] for r in svals])
    div_col = [r[-1] for r in body[1:] if r[-1] != ""]
    if div_col:
        divergence = np.array([float(v) for v in div_col])
    return Trajectory(observations=obs, actions=actions, planned=planned,
                      planned_states=planned_states, planned_actions=planned_actions,
                      divergence=divergence)


def completed_episodes(run_dir: Path) -> int:
    n = 0
    while True:
        traj, _, model = episode_paths(run_dir, n + 1)
        if not (traj.exists() and model.exists()):
            return n
        n += 1


def write_run_metrics_raw(run_dir: Path, rows):
    """Write one run's metrics rows (already-formatted string tuples)."""
    with open(run_dir / "metrics_rows.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        writer.writerows(rows)


def read_run_metrics(run_dir: Path):
    path = run_dir / "metrics_rows.csv"
    if not path.exists():
        return []
    rows = list(csv.reader(open(path)))[1:]
    return [tuple(r) for r in rows]


def collect_metrics(root: Path, include_wall_time: bool = True) -> str:
    """Regenerate the experiment metrics CSV from all run directories.

    Rows are sorted by (env, method, seed, episode), so the output is
    independent of scheduling/run order.
    """
    rows = []
    for sub in sorted(p for p in Path(root).iterdir() if p.is_dir()):
        rows.extend(read_run_metrics(sub))
    rows.sort(key=lambda r: (r[0], r[1], int(r[2]), int(r[3])))
    lines = [METRICS_HEADER + ",".join(METRICS_COLUMNS)]
    for r in rows:
        r = list(r)
        if not include_wall_time:
            r[6] = ""
        lines.append(",".join(str(v) for v in r))
    return "\n".join(lines) + "\n"


def write_metrics(root: Path):
    text = collect_metrics(root)
    (Path(root) / "metrics.csv").write_text(text)
    return text


def read_metrics(path: Path):
    """Parse a metrics CSV into a list of dict rows."""
    out = []
    with open(path) as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].startswith("#")]
    header = rows[0]
    for r in rows[1:]:
        rec = dict(zip(header, r))
        rec["seed"] = int(rec["seed"])
        rec["episode"] = int(rec["episode"])
        for key in ("mean_log_lik", "downstream_cost", "wall_time_s"):
            rec[key] = float(rec[key]) if rec[key] != "" else None
        out.append(rec)
    return out


def quantile_band(values):
    """(median, 1st decile, 9th decile) with type-7 linear interpolation."""
    arr = np.asarray(values, dtype=float)
    return (float(np.quantile(arr, 0.5)), float(np.quantile(arr, 0.1)),
            float(np.quantile(arr, 0.9)))


def summarize(metrics_rows):
    """Per (env, method, episode): decile bands of each metric across seeds."""
    groups = {}
    for rec in metrics_rows:
        groups.setdefault((rec["env"], rec["method"], rec["episode"]), []).append(rec)
    lines = ["env,method,episode,ll_median,ll_d1,ll_d9,cost_median,cost_d1,cost_d9"]
    for (env, method, episode) in sorted(groups):
        recs = groups[(env, method, episode)]
        lls = [r["mean_log_lik"] for r in recs if r["mean_log_lik"] is not None]
        costs = [r["downstream_cost"] for r in recs if r["downstream_cost"] is not None]
        band_ll = quantile_band(lls) if lls else ("", "", "")
        band_c = quantile_band(costs) if costs else ("", "", "")
        lines.append(",".join([env, method, str(episode)]
                              + [fmt(v) if v != "" else "" for v in band_ll]
                              + [fmt(v) if v != "" else "" for v in band_c]))
    return "\n".join(lines) + "\n"


def emit_plot_data(metrics_path: Path, out_dir: Path):
    """One file per (env, metric) with per-method decile-band columns."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_metrics(metrics_path)
    written = []
    for metric, column in (("log_lik", "mean_log_lik"), ("cost", "downstream_cost")):
        by_env = {}
        for rec in rows:
            if rec[column] is None:
                continue
            by_env.setdefault(rec["env"], {}).setdefault(rec["method"], {}) \
                .setdefault(rec["episode"], []).append(rec[column])
        for env, methods in sorted(by_env.items()):
            path = out_dir / f"{env}_{metric}.csv"
            names = sorted(methods)
            episodes = sorted({e for m in methods.values() for e in m})
            header = ["episode"]
            for name in names:
                header += [f"{name}_median", f"{name}_d1", f"{name}_d9"]
            lines = [",".join(header)]
            for ep in episodes:
                cells = [str(ep)]
                for name in names:
                    vals = methods[name].get(ep)
                    if vals:
                        med, d1, d9 = quantile_band(vals)
                        cells += [fmt(med), fmt(d1), fmt(d9)]
                    else:
                        cells += ["", "", ""]
                lines.append(",".join(cells))
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def save_oracle(path: Path, learned, l_oracle: float, info: dict):
    model_mod.save_model(path, learned)
    meta = dict(info)
    meta["l_oracle"] = l_oracle
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_oracle(path: Path):
    learned = model_mod.load_model(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    return learned, meta
