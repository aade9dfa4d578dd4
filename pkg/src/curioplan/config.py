"""Experiment configuration: flat dotted-key text files plus overrides.

The on-disk format is one ``key = value`` pair per line ('#' comments,
blank lines ignored).  Command-line overrides use the same ``key=value``
strings and take precedence.  Serialization sorts keys, so
parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from typing import Optional

from .envs import EnvId, make_env_spec
from .errors import ConfigError
from .explorer import DEFAULT_FEATURE_COUNTS

VALID_METHODS = ("rhc-us", "rhc-evr", "rand")

# EVR tractability gate (objective cost grows with model size and horizon)
EVR_MAX_FEATURES = 40
EVR_MAX_HORIZON = 150


@dataclass(frozen=True)
class ExperimentConfig:
    envs: tuple = ("mountain_car",)
    method: str = "rhc-us"
    episodes: int = 20
    seeds: tuple = (0,)
    features: Optional[int] = None       # None: per-environment default
    target_mode: str = "delta"           # delta | absolute
    alpha: float = 1.0
    bandwidth_mode: str = "oracle"       # oracle | pairwise | evidence | fixed
    bandwidth_refit: bool = True
    bandwidth_floor: float = 1e-3
    bandwidth_value: tuple = ()
    beta_mode: str = "oracle"            # oracle | refit | episode1 | fixed
    beta_value: float = 1.0
    horizon: Optional[int] = None
    replan_interval: int = 0
    warm_start: str = "prev"
    n_candidates: int = 24
    evr_force: bool = False
    solver_feas_tol: float = 1e-4
    solver_grad_tol: float = 1e-6
    solver_max_inner: int = 150
    solver_max_outer: int = 8
    eval_num_traj: int = 50
    eval_traj_len: int = 10
    eval_seed: int = 12345
    eval_downstream_interval: int = 1    # 0: final episode only
    oracle_samples: int = 10_000
    oracle_seed: int = 7
    out: str = "runs"
    workers: int = 1


# dotted config key -> dataclass field
KEY_MAP = {
    "env": "envs",
    "method": "method",
    "episodes": "episodes",
    "seeds": "seeds",
    "model.features": "features",
    "model.target": "target_mode",
    "model.alpha": "alpha",
    "bandwidth.mode": "bandwidth_mode",
    "bandwidth.refit": "bandwidth_refit",
    "bandwidth.floor": "bandwidth_floor",
    "bandwidth.value": "bandwidth_value",
    "beta.mode": "beta_mode",
    "beta.value": "beta_value",
    "plan.horizon": "horizon",
    "plan.replan_interval": "replan_interval",
    "plan.warm_start": "warm_start",
    "plan.candidates": "n_candidates",
    "plan.evr_force": "evr_force",
    "solver.feas_tol": "solver_feas_tol",
    "solver.grad_tol": "solver_grad_tol",
    "solver.max_inner": "solver_max_inner",
    "solver.max_outer": "solver_max_outer",
    "eval.num_traj": "eval_num_traj",
    "eval.traj_len": "eval_traj_len",
    "eval.seed": "eval_seed",
    "eval.downstream_interval": "eval_downstream_interval",
    "oracle.samples": "oracle_samples",
    "oracle.seed": "oracle_seed",
    "out": "out",
    "workers": "workers",
}
FIELD_MAP = {v: k for k, v in KEY_MAP.items()}


def _parse_bool(key, raw):
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_value(key: str, field_name: str, raw: str):
    raw = raw.strip()
    if field_name == "envs":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if field_name == "seeds":
        out = []
        for part in raw.split(","):
            part = part.strip()
            if not part:
                continue
            if ":" in part:  # range a:b (half-open)
                a, b = part.split(":")
                out.extend(range(int(a), int(b)))
            else:
                out.append(int(part))
        return tuple(out)
    if field_name == "bandwidth_value":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if field_name in ("features", "horizon"):
        return None if raw in ("", "none") else int(raw)
    if field_name in ("episodes", "replan_interval", "n_candidates",
                      "solver_max_inner", "solver_max_outer", "eval_num_traj",
                      "eval_traj_len", "eval_seed", "eval_downstream_interval",
                      "oracle_samples", "oracle_seed", "workers"):
        return int(raw)
    if field_name in ("alpha", "bandwidth_floor", "beta_value",
                      "solver_feas_tol", "solver_grad_tol"):
        return float(raw)
    if field_name in ("bandwidth_refit", "evr_force"):
        return _parse_bool(key, raw)
    return raw


def resolved_features(cfg: ExperimentConfig, env_name: str) -> int:
    if cfg.features is not None:
        return cfg.features
    return DEFAULT_FEATURE_COUNTS[EnvId(env_name)]


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.method not in VALID_METHODS:
        raise ConfigError(f"method: must be one of {VALID_METHODS}, got {cfg.method!r}")
    if cfg.episodes < 1:
        raise ConfigError("episodes: must be >= 1")
    if not cfg.seeds:
        raise ConfigError("seeds: must be nonempty")
    if cfg.target_mode not in ("delta", "absolute"):
        raise ConfigError(f"model.target: unknown mode {cfg.target_mode!r}")
    if cfg.bandwidth_mode not in ("oracle", "pairwise", "evidence", "fixed"):
        raise ConfigError(f"bandwidth.mode: unknown mode {cfg.bandwidth_mode!r}")
    if cfg.beta_mode not in ("oracle", "refit", "episode1", "fixed"):
        raise ConfigError(f"beta.mode: unknown mode {cfg.beta_mode!r}")
    if cfg.warm_start not in ("prev", "zero"):
        raise ConfigError(f"plan.warm_start: unknown mode {cfg.warm_start!r}")
    for name in cfg.envs:
        try:
            env_id = EnvId(name)
        except ValueError:
            raise ConfigError(f"env: unknown environment {name!r}") from None
        if cfg.method == "rhc-evr" and not cfg.evr_force:
            m = resolved_features(cfg, name)
            horizon = cfg.horizon or make_env_spec(name).episode_len
            if m > EVR_MAX_FEATURES or horizon > EVR_MAX_HORIZON:
                raise ConfigError(
                    f"method rhc-evr gated off for env {name!r}: m={m} "
                    f"(max {EVR_MAX_FEATURES}), horizon={horizon} (max "
                    f"{EVR_MAX_HORIZON}); set plan.evr_force to override")
        _ = env_id
    return cfg


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Build a validated config from an optional file plus override strings."""
    values = {}

    def apply(key: str, raw: str, origin: str):
        key = key.strip()
        if key not in KEY_MAP:
            raise ConfigError(f"{origin}: unknown config key {key!r}")
        field_name = KEY_MAP[key]
        try:
            values[field_name] = _parse_value(key, field_name, raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{origin}: invalid value for {key!r}: {exc}") from None

    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = line.split("=", 1)
                apply(key, raw, f"{path}:{lineno}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected 'key=value'")
        key, raw = item.split("=", 1)
        apply(key, raw, f"override {item!r}")
    return validate(ExperimentConfig(**values))


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form (sorted keys); parse(serialize(cfg)) == cfg."""
    lines = []
    for f in fields(cfg):
        key = FIELD_MAP[f.name]
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif value is None:
            text = ""
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(sorted(lines)) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """Short content hash over run-affecting fields (excludes out/workers)."""
    lines = [ln for ln in serialize_config(cfg).splitlines()
             if not ln.startswith(("out ", "workers "))]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]
