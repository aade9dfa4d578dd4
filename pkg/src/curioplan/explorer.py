"""Episodic exploration loop.

Each episode: plan the most informative action sequence under the current
model, execute it open-loop on the real environment, then refit the model
on everything observed so far.  A uniform-random baseline shares the same
model-update protocol so the two are directly comparable.

By default the feature bandwidth is refit after every episode, which
changes the feature map and therefore triggers a full model refit over all
past data; freezing the bandwidth switches later episodes to incremental
posterior updates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import blr, envs, trajopt
from .acquisition import ObjectiveKind, check_evr_gate, make_objective
from .errors import NumericalError
from .model import (LearnedModel, ModelSettings, Transitions, concat_transitions,
                    initial_model, refit_model, update_model)

log = logging.getLogger(__name__)

# Feature counts per environment (model sizes the experiments use).
DEFAULT_FEATURE_COUNTS = {
    envs.EnvId.MOUNTAIN_CAR: 20,
    envs.EnvId.PENDULUM: 90,
    envs.EnvId.CARTPOLE: 80,
}


@dataclass
class Trajectory:
    """One executed episode; observation count is action count + 1."""

    observations: np.ndarray           # (L+1, obs_dim)
    actions: np.ndarray                # (L, action_dim)
    planned: bool = False
    planned_states: Optional[np.ndarray] = None   # (T, obs_dim) solver states
    planned_actions: Optional[np.ndarray] = None  # (T, action_dim) full plan
    divergence: Optional[np.ndarray] = None       # (L,) ||executed - planned||

    def __post_init__(self):
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=float))
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        if self.observations.shape[0] != self.actions.shape[0] + 1:
            raise ValueError("need exactly one more observation than actions")

    def __len__(self) -> int:
        return self.actions.shape[0]

    def transitions(self) -> Transitions:
        return Transitions(obs=self.observations[:-1], act=self.actions,
                           next_obs=self.observations[1:])


@dataclass
class ExplorationRun:
    env_name: str
    method: str
    seed: int
    episodes: list = field(default_factory=list)       # Trajectory per episode
    models: list = field(default_factory=list)         # LearnedModel snapshots
    entropies: list = field(default_factory=list)      # belief entropy per episode
    wall_times: list = field(default_factory=list)     # seconds per episode
    solve_converged: list = field(default_factory=list)
    config_hash: str = ""

    def transitions(self) -> Transitions:
        return concat_transitions([t.transitions() for t in self.episodes])


def _exploration_solver() -> trajopt.SolverOptions:
    # exploration solves favor throughput over final polish; the candidate
    # screen supplies good basins so the local solve needs fewer iterations
    return trajopt.SolverOptions(max_inner=150, max_outer=8)


@dataclass(frozen=True)
class ExploreSettings:
    model: ModelSettings
    horizon: Optional[int] = None       # None: plan over the full episode
    replan_interval: int = 0            # 0: strictly open loop
    warm_start: str = "prev"            # prev | zero
    n_candidates: int = 24              # seeded screening inits per solve
    solver: trajopt.SolverOptions = field(default_factory=_exploration_solver)
    evr_force: bool = False


def default_settings(spec: envs.EnvSpec, **model_overrides) -> ExploreSettings:
    m = model_overrides.pop("m", DEFAULT_FEATURE_COUNTS[spec.id])
    return ExploreSettings(model=ModelSettings(m=m, **model_overrides))


def _derived_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence((seed, tag)).generate_state(1)[0])


def _episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 1000 + episode)))


def execute_open_loop(spec: envs.EnvSpec, actions, planned_states=None,
                      planned: bool = True) -> Trajectory:
    """Run an action sequence from reset; truncates at environment termination."""
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    state = envs.reset(spec)
    observations = [envs.observe(spec, state)]
    executed = []
    for a in actions:
        clipped = np.clip(a, spec.action_low, spec.action_high)
        state, terminated = envs.step(spec, state, clipped)
        observations.append(envs.observe(spec, state))
        executed.append(clipped)
        if terminated:
            break
    observations = np.asarray(observations)
    executed = np.asarray(executed).reshape(len(executed), spec.action_dim)
    divergence = None
    if planned_states is not None:
        planned_states = np.asarray(planned_states, dtype=float)
        n = min(len(executed), planned_states.shape[0])
        divergence = np.linalg.norm(observations[1:n + 1] - planned_states[:n], axis=1)
    return Trajectory(observations=observations, actions=executed, planned=planned,
                      planned_states=planned_states,
                      planned_actions=actions if planned else None,
                      divergence=divergence)


class _EpisodeRunner:
    """Shared protocol: collect an episode, then refit/update the model."""

    def __init__(self, spec: envs.EnvSpec, settings: ExploreSettings, seed: int):
        self.spec = spec
        self.settings = settings
        self.seed = seed
        self.fmap_seed = _derived_seed(seed, 101)
        n = spec.obs_dim + spec.action_dim
        self.model = initial_model(settings.model, n, spec.obs_dim, self.fmap_seed)
        self.parts = []
        self.locked_beta = None
        self.locked_bandwidth = None

    def absorb(self, trajectory: Trajectory, episode: int) -> LearnedModel:
        new = trajectory.transitions()
        self.parts.append(new)
        ms = self.settings.model
        if ms.bandwidth_refit or episode == 1:
            beta_pin = self.locked_beta if ms.beta_mode == "episode1" else None
            bw_pin = None if ms.bandwidth_refit else self.locked_bandwidth
            data = concat_transitions(self.parts)
            self.model = refit_model(data, ms, self.fmap_seed,
                                     beta=beta_pin, bandwidth=bw_pin)
            if episode == 1:
                self.locked_beta = self.model.belief.beta
                self.locked_bandwidth = self.model.fmap.bandwidth
        else:
            self.model = update_model(self.model, new)
        return self.model


def init_candidates(rng, T, k, low, high, count, extra=None):
    """Screening candidates: zero actions, optional extras (e.g. the previous
    solution), and seeded bang-bang / square-wave / iid-uniform sequences."""
    cands = [np.zeros((T, k))]
    for a in (extra or []):
        if a is not None and a.shape[0] >= T:
            cands.append(np.asarray(a, dtype=float)[:T])
    i = 0
    while len(cands) < count:
        kind = i % 3
        if kind == 0:
            cands.append(trajopt.block_actions(rng, T, k, low, high))
        elif kind == 1:
            cands.append(trajopt.square_wave_actions(rng, T, k, low, high))
        else:
            cands.append(rng.uniform(low, high, size=(T, k)))
        i += 1
    return cands


def _plan(spec, settings, model, objective_kind, horizon, warm_actions, rng):
    objective = make_objective(objective_kind, model.belief, model.fmap,
                               cost_fn=None, action_dim=spec.action_dim,
                               horizon=horizon, force_evr=settings.evr_force)
    box = envs.planning_bounds(spec)
    problem = trajopt.ShootingProblem(
        s0=envs.observe(spec, envs.reset(spec)), T=horizon,
        action_dim=spec.action_dim, obs_dim=spec.obs_dim,
        dynamics=model.dynamics(), objective=objective,
        action_low=spec.action_low, action_high=spec.action_high,
        obs_low=None if box is None else box[0],
        obs_high=None if box is None else box[1])
    extra = [warm_actions[:horizon]] if (
        warm_actions is not None and settings.warm_start == "prev"
        and warm_actions.shape[0] >= horizon) else None
    cands = init_candidates(rng, horizon, spec.action_dim, spec.action_low,
                            spec.action_high, settings.n_candidates, extra=extra)
    init = trajopt.screen_inits(problem, cands)
    return trajopt.solve(problem, init=init, options=settings.solver)


def _rhc_episode(spec, settings, model, objective_kind, horizon, warm_actions, rng):
    """Plan and execute one episode; returns (trajectory, actions, converged)."""
    try:
        actions, states, stats = _plan(spec, settings, model, objective_kind,
                                       horizon, warm_actions, rng)
        converged = stats.converged
    except NumericalError as exc:
        log.warning("planner failed (%s); falling back to zero actions", exc)
        actions = np.zeros((horizon, spec.action_dim))
        states = trajopt.rollout_mean(model.dynamics(), envs.observe(spec, envs.reset(spec)),
                                      actions)
        converged = False
    n_exec = min(horizon, spec.episode_len)
    trajectory = execute_open_loop(spec, actions[:n_exec], planned_states=states[:n_exec])
    trajectory.planned_actions = actions
    return trajectory, actions, converged


def _replay(runner: _EpisodeRunner, run: ExplorationRun, history):
    """Rebuild runner/run state from stored trajectories (resume path)."""
    warm = None
    for i, trajectory in enumerate(history, 1):
        model = runner.absorb(trajectory, i)
        run.episodes.append(trajectory)
        run.models.append(model)
        run.entropies.append(blr.entropy(model.belief))
        run.solve_converged.append(True)
        run.wall_times.append(0.0)
        if trajectory.planned_actions is not None:
            warm = trajectory.planned_actions
    return warm, len(run.episodes) + 1


def run_rhc(spec: envs.EnvSpec, objective_kind: ObjectiveKind, episodes: int,
            seed: int, settings: ExploreSettings | None = None,
            history=(), on_episode=None) -> ExplorationRun:
    """Planned exploration: optimize the acquisition, execute, update, repeat.

    ``history`` (stored trajectories) resumes an interrupted run by
    replaying the model updates; ``on_episode(episode, trajectory, model,
    wall_seconds, converged)`` fires after every new episode.
    """
    settings = settings or default_settings(spec)
    horizon = settings.horizon or spec.episode_len
    if objective_kind.kind == "evr":
        check_evr_gate(settings.model.m, horizon, force=settings.evr_force)
    runner = _EpisodeRunner(spec, settings, seed)
    run = ExplorationRun(env_name=spec.id.value, method=f"rhc-{objective_kind.kind}",
                         seed=seed)
    warm, start = _replay(runner, run, history)
    for episode in range(start, episodes + 1):
        t0 = time.perf_counter()
        rng = _episode_rng(seed, episode)
        if settings.replan_interval > 0:
            trajectory, warm, converged = _replanned_episode(
                spec, settings, runner.model, objective_kind, horizon, rng)
        else:
            trajectory, warm, converged = _rhc_episode(
                spec, settings, runner.model, objective_kind, horizon, warm, rng)
        model = runner.absorb(trajectory, episode)
        wall = time.perf_counter() - t0
        run.episodes.append(trajectory)
        run.models.append(model)
        run.entropies.append(blr.entropy(model.belief))
        run.solve_converged.append(converged)
        run.wall_times.append(wall)
        if on_episode is not None:
            on_episode(episode, trajectory, model, wall, converged)
    return run


def _replanned_episode(spec, settings, model, objective_kind, horizon, rng):
    """Re-solve every ``replan_interval`` steps from the true state."""
    interval = settings.replan_interval
    state = envs.reset(spec)
    observations = [envs.observe(spec, state)]
    executed = []
    first_states = None
    first_actions = None
    warm = None
    converged = True
    t = 0
    terminated = False
    while t < min(horizon, spec.episode_len) and not terminated:
        rest = horizon - t
        objective = make_objective(objective_kind, model.belief, model.fmap,
                                   action_dim=spec.action_dim, horizon=rest,
                                   force_evr=settings.evr_force)
        box = envs.planning_bounds(spec)
        problem = trajopt.ShootingProblem(
            s0=observations[-1], T=rest, action_dim=spec.action_dim,
            obs_dim=spec.obs_dim, dynamics=model.dynamics(), objective=objective,
            action_low=spec.action_low, action_high=spec.action_high,
            obs_low=None if box is None else box[0],
            obs_high=None if box is None else box[1])
        if first_states is None:
            cands = init_candidates(rng, rest, spec.action_dim, spec.action_low,
                                    spec.action_high, settings.n_candidates)
            init = trajopt.screen_inits(problem, cands)
        else:
            init = (warm, None) if warm is not None else None
        actions, states, stats = trajopt.solve(problem, init=init, options=settings.solver)
        converged = converged and stats.converged
        if first_states is None:
            first_states, first_actions = states, actions
        for a in actions[:interval]:
            clipped = np.clip(a, spec.action_low, spec.action_high)
            state, terminated = envs.step(spec, state, clipped)
            observations.append(envs.observe(spec, state))
            executed.append(clipped)
            t += 1
            if terminated or t >= horizon:
                break
        warm = actions[min(interval, len(actions)):]
        if warm.shape[0] == 0:
            warm = None
    observations = np.asarray(observations)
    executed = np.asarray(executed).reshape(len(executed), spec.action_dim)
    n = min(len(executed), first_states.shape[0])
    divergence = np.linalg.norm(observations[1:n + 1] - first_states[:n], axis=1)
    trajectory = Trajectory(observations=observations, actions=executed, planned=True,
                            planned_states=first_states, planned_actions=first_actions,
                            divergence=divergence)
    return trajectory, first_actions, converged


def run_random(spec: envs.EnvSpec, episodes: int, seed: int,
               settings: ExploreSettings | None = None,
               history=(), on_episode=None) -> ExplorationRun:
    """Uniform-random exploration with the same model-update protocol."""
    settings = settings or default_settings(spec)
    horizon = settings.horizon or spec.episode_len
    runner = _EpisodeRunner(spec, settings, seed)
    run = ExplorationRun(env_name=spec.id.value, method="rand", seed=seed)
    _, start = _replay(runner, run, history)
    for episode in range(start, episodes + 1):
        t0 = time.perf_counter()
        rng = _episode_rng(seed, episode)
        n_exec = min(horizon, spec.episode_len)
        actions = rng.uniform(spec.action_low, spec.action_high,
                              size=(n_exec, spec.action_dim))
        trajectory = execute_open_loop(spec, actions, planned=False)
        model = runner.absorb(trajectory, episode)
        wall = time.perf_counter() - t0
        run.episodes.append(trajectory)
        run.models.append(model)
        run.entropies.append(blr.entropy(model.belief))
        run.solve_converged.append(True)
        run.wall_times.append(wall)
        if on_episode is not None:
            on_episode(episode, trajectory, model, wall, True)
    return run
