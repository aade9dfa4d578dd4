"""Model-quality evaluation: test log-likelihood and downstream task cost.

The likelihood metric scores a learned model on short random trajectories
(random start states, uniform random actions).  Its ceiling is defined by
an *oracle* model of the same class trained on dense uniform single-step
transitions from the full state-action space.  The downstream metric plans
the evaluation task on the learned model, executes the plan on the true
environment, and accumulates the stage cost.
"""

from __future__ import annotations

import logging
from functools import partial

import numpy as np

from . import envs, trajopt
from .acquisition import TaskCost
from .errors import InvalidInputError
from .explorer import Trajectory, execute_open_loop, init_candidates
from .model import LearnedModel, ModelSettings, Transitions, refit_model

log = logging.getLogger(__name__)

# Uniform sampling ranges over internal coordinates (the "full state space"
# for oracle training and test-set starts); overridable via config.
STATE_RANGES = {
    envs.EnvId.MOUNTAIN_CAR: [(-1.2, 0.8), (-0.07, 0.07)],
    envs.EnvId.PENDULUM: [(-np.pi, np.pi), (-8.0, 8.0)],
    envs.EnvId.CARTPOLE: [(-2.0, 2.0), (-np.pi, np.pi), (-5.0, 5.0), (-8.0, 8.0)],
}


def _sample_internal(spec: envs.EnvSpec, rng, n: int, ranges=None) -> np.ndarray:
    ranges = ranges if ranges is not None else STATE_RANGES[spec.id]
    cols = [rng.uniform(lo, hi, size=n) for lo, hi in ranges]
    return np.stack(cols, axis=1)


def generate_test_set(spec: envs.EnvSpec, num_traj: int, length: int = 10,
                      seed: int = 0, ranges=None) -> Transitions:
    """Transitions from ``num_traj`` random trajectories of ``length`` steps.

    Starts are uniform over the documented state ranges, actions uniform
    within bounds; the raw dynamics map is iterated without termination so
    every trajectory contributes exactly ``length`` transitions.
    """
    if num_traj < 1:
        raise InvalidInputError("num_traj must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7)))
    starts = _sample_internal(spec, rng, num_traj, ranges)
    obs_rows, act_rows, next_rows = [], [], []
    for i in range(num_traj):
        internal = starts[i]
        obs = envs.observe(spec, envs.EnvState(internal=internal))
        actions = rng.uniform(spec.action_low, spec.action_high,
                              size=(length, spec.action_dim))
        for t in range(length):
            internal = envs.advance(spec, internal, float(actions[t][0]))
            nxt = envs.observe(spec, envs.EnvState(internal=internal))
            obs_rows.append(obs)
            act_rows.append(actions[t])
            next_rows.append(nxt)
            obs = nxt
    return Transitions(obs=np.asarray(obs_rows), act=np.asarray(act_rows),
                       next_obs=np.asarray(next_rows))


def uniform_transitions(spec: envs.EnvSpec, num_samples: int, seed: int,
                        ranges=None) -> Transitions:
    """Single-step transitions from uniform (state, action) samples."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 11)))
    internals = _sample_internal(spec, rng, num_samples, ranges)
    actions = rng.uniform(spec.action_low, spec.action_high,
                          size=(num_samples, spec.action_dim))
    obs_rows = np.empty((num_samples, spec.obs_dim))
    next_rows = np.empty((num_samples, spec.obs_dim))
    for i in range(num_samples):
        obs_rows[i] = envs.observe(spec, envs.EnvState(internal=internals[i]))
        nxt = envs.advance(spec, internals[i], float(actions[i][0]))
        next_rows[i] = envs.observe(spec, envs.EnvState(internal=nxt))
    return Transitions(obs=obs_rows, act=actions, next_obs=next_rows)


def oracle_model(spec: envs.EnvSpec, settings: ModelSettings,
                 num_samples: int = 10_000, seed: int = 0, ranges=None) -> LearnedModel:
    """Model fit on dense uniform transitions; its test likelihood is the
    per-environment ceiling for this model class."""
    data = uniform_transitions(spec, num_samples, seed, ranges)
    fmap_seed = int(np.random.SeedSequence((seed, 13)).generate_state(1)[0])
    return refit_model(data, settings, fmap_seed)


def mean_log_likelihood(model: LearnedModel, test_set: Transitions) -> float:
    """Mean per-transition log-likelihood of the test set under the model."""
    if len(test_set) == 0:
        raise InvalidInputError("empty test set")
    return float(np.mean(model.log_likelihood_rows(test_set)))


def trajectory_cost(spec: envs.EnvSpec, trajectory: Trajectory,
                    horizon: int | None = None) -> float:
    """Executed cumulative cost over a full evaluation horizon.

    Stage costs over the executed steps plus zero-action terms for the
    final state; when the episode terminated early, the remaining steps are
    charged at the terminal state's zero-action cost, so bailing out at an
    environment bound cannot beat actually solving the task.
    """
    horizon = horizon or spec.episode_len
    costs = envs.stage_cost(spec, trajectory.observations[:-1], trajectory.actions)
    terminal = envs.stage_cost(spec, trajectory.observations[-1],
                               np.zeros(spec.action_dim))
    remaining = max(0, horizon - len(trajectory))
    return float(np.sum(costs) + (1 + remaining) * terminal)


def plan_task(model: LearnedModel, spec: envs.EnvSpec, horizon: int | None = None,
              solver: trajopt.SolverOptions | None = None, seed: int = 0,
              n_candidates: int = 24):
    """Solve the evaluation task on the learned mean dynamics."""
    horizon = horizon or spec.episode_len
    objective = TaskCost(partial(envs.stage_cost, spec), spec.action_dim)
    box = envs.planning_bounds(spec)
    problem = trajopt.ShootingProblem(
        s0=envs.observe(spec, envs.reset(spec)), T=horizon,
        action_dim=spec.action_dim, obs_dim=spec.obs_dim,
        dynamics=model.dynamics(), objective=objective,
        action_low=spec.action_low, action_high=spec.action_high,
        obs_low=None if box is None else box[0],
        obs_high=None if box is None else box[1])
    rng = np.random.default_rng(np.random.SeedSequence((seed, 17)))
    cands = init_candidates(rng, horizon, spec.action_dim, spec.action_low,
                            spec.action_high, n_candidates)
    init = trajopt.screen_inits(problem, cands, truncate_at_bounds=False)
    return trajopt.solve(problem, init=init, options=solver)


def downstream_cost(model: LearnedModel, spec: envs.EnvSpec,
                    horizon: int | None = None,
                    solver: trajopt.SolverOptions | None = None,
                    seed: int = 0) -> float:
    """Plan on the model, execute open-loop on the true environment, and
    return the executed cumulative cost."""
    actions, states, stats = plan_task(model, spec, horizon, solver, seed=seed)
    if not stats.converged:
        log.warning("task planning did not converge (violation %.2e); "
                    "scoring the best iterate", stats.constraint_violation)
    n_exec = min(actions.shape[0], spec.episode_len)
    trajectory = execute_open_loop(spec, actions[:n_exec], planned_states=states[:n_exec])
    return trajectory_cost(spec, trajectory, horizon=n_exec)
