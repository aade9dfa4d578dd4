"""Deterministic control environments: MountainCar, Pendulum, CartPole.

Each environment is a value-like state machine: ``reset`` produces a fixed
start state, ``step`` maps (state, action) to the next state, and
``observe`` encodes the physical coordinates into the observation vector
the learning pipeline sees.  Angles are measured from the upright position,
so the swing-up goal is theta = 0.

Stage costs follow the evaluation tasks: drive the car to the goal, swing
the pendulum/pole up.  ``stage_cost`` is written generically so it can be
evaluated on plain arrays or on autodiff duals during planning.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError


class EnvId(enum.Enum):
    MOUNTAIN_CAR = "mountain_car"
    PENDULUM = "pendulum"
    CARTPOLE = "cartpole"


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment.

    ``physics`` holds the remaining numeric constants (masses, limits,
    integrator substeps) so experiments can override them via config.
    """

    id: EnvId
    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    episode_len: int
    dt: float
    physics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(self.action_low < self.action_high):
            raise InvalidInputError("action_low must be < action_high elementwise")
        if self.episode_len <= 0 or self.dt <= 0:
            raise InvalidInputError("episode_len and dt must be positive")


@dataclass(frozen=True)
class EnvState:
    """Physical coordinates plus episode bookkeeping.

    ``clip_count`` counts how many actions had to be clipped into bounds;
    it is diagnostic only and does not affect the dynamics.
    """

    internal: np.ndarray
    step_count: int = 0
    clip_count: int = 0


_DEFAULTS = {
    EnvId.MOUNTAIN_CAR: dict(
        obs_dim=2,
        action_dim=1,
        action_low=-1.0,
        action_high=1.0,
        episode_len=130,
        dt=1.0,
        physics=dict(power=1e-3, hill=0.0025, x_min=-1.2, x_max=0.8, x_goal=0.6),
    ),
    EnvId.PENDULUM: dict(
        obs_dim=3,
        action_dim=1,
        action_low=-2.0,
        action_high=2.0,
        episode_len=100,
        dt=0.08,
        physics=dict(g=9.81, m=1.0, l=1.0, substeps=10),
    ),
    EnvId.CARTPOLE: dict(
        obs_dim=5,
        action_dim=1,
        action_low=-10.0,
        action_high=10.0,
        episode_len=100,
        dt=0.02,
        physics=dict(g=9.81, cart_mass=1.0, pole_mass=0.1, half_length=0.5,
                     x_limit=2.0, substeps=2),
    ),
}


def make_env_spec(name, **overrides) -> EnvSpec:
    """Build an EnvSpec by name ('mountain_car', 'pendulum', 'cartpole').

    Keyword overrides replace top-level fields (``episode_len``, ``dt``, ...)
    or individual ``physics`` constants.
    """
    env_id = EnvId(name) if not isinstance(name, EnvId) else name
    cfg = {k: v for k, v in _DEFAULTS[env_id].items()}
    physics = dict(cfg.pop("physics"))
    for key, value in overrides.items():
        if key in physics:
            physics[key] = value
        elif key in cfg:
            cfg[key] = value
        else:
            raise InvalidInputError(f"unknown environment parameter {key!r}")
    k = cfg.pop("action_dim")
    low = np.full(k, float(cfg.pop("action_low")))
    high = np.full(k, float(cfg.pop("action_high")))
    return EnvSpec(id=env_id, action_dim=k, action_low=low, action_high=high,
                   physics=physics, **cfg)


def reset(spec: EnvSpec) -> EnvState:
    """Fixed deterministic start state (valley center / hanging down)."""
    if spec.id is EnvId.MOUNTAIN_CAR:
        internal = np.zeros(2)
    elif spec.id is EnvId.PENDULUM:
        internal = np.array([math.pi, 0.0])
    else:
        internal = np.array([0.0, math.pi, 0.0, 0.0])
    return EnvState(internal=internal, step_count=0)


def _advance(spec: EnvSpec, internal: np.ndarray, a: float) -> np.ndarray:
    """One control step of the raw dynamics map (no termination logic)."""
    p = spec.physics
    if spec.id is EnvId.MOUNTAIN_CAR:
        x, v = internal
        v = v + p["power"] * a - p["hill"] * math.cos(3.0 * x)
        x = x + v
        return np.array([x, v])
    if spec.id is EnvId.PENDULUM:
        th, thd = internal
        h = spec.dt / p["substeps"]
        g_l = p["g"] / p["l"]
        inv_ml2 = 1.0 / (p["m"] * p["l"] ** 2)
        for _ in range(p["substeps"]):
            thd = thd + h * (g_l * math.sin(th) + a * inv_ml2)
            th = th + h * thd
        return np.array([th, thd])
    # cartpole: frictionless cart-pole equations, theta from upright
    x, th, xd, thd = internal
    h = spec.dt / p["substeps"]
    mc, mp, hl, g = p["cart_mass"], p["pole_mass"], p["half_length"], p["g"]
    total = mc + mp
    for _ in range(p["substeps"]):
        sin, cos = math.sin(th), math.cos(th)
        tmp = (a + mp * hl * thd * thd * sin) / total
        thdd = (g * sin - cos * tmp) / (hl * (4.0 / 3.0 - mp * cos * cos / total))
        xdd = tmp - mp * hl * thdd * cos / total
        xd = xd + h * xdd
        x = x + h * xd
        thd = thd + h * thdd
        th = th + h * thd
    return np.array([x, th, xd, thd])


def advance(spec: EnvSpec, internal: np.ndarray, action: float) -> np.ndarray:
    """Public raw dynamics map on internal coordinates (no bookkeeping)."""
    return _advance(spec, internal, action)


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, bool]:
    """Advance one control interval; returns (next_state, terminated).

    Actions outside the bounds are clipped (counted in ``clip_count``);
    non-finite actions are rejected.
    """
    action = np.atleast_1d(np.asarray(action, dtype=float))
    if not np.all(np.isfinite(action)):
        raise InvalidInputError("non-finite action")
    clipped = np.clip(action, spec.action_low, spec.action_high)
    clips = state.clip_count + int(np.any(clipped != action))
    internal = _advance(spec, state.internal, float(clipped[0]))
    steps = state.step_count + 1
    terminated = steps >= spec.episode_len
    p = spec.physics
    if spec.id is EnvId.MOUNTAIN_CAR:
        terminated = terminated or internal[0] <= p["x_min"] or internal[0] >= p["x_max"]
    elif spec.id is EnvId.CARTPOLE:
        terminated = terminated or abs(internal[0]) >= p["x_limit"]
    return EnvState(internal=internal, step_count=steps, clip_count=clips), bool(terminated)


def observe(spec: EnvSpec, state: EnvState) -> np.ndarray:
    """Encode physical coordinates into the observation vector."""
    s = state.internal
    if spec.id is EnvId.MOUNTAIN_CAR:
        return s.copy()
    if spec.id is EnvId.PENDULUM:
        return np.array([math.cos(s[0]), math.sin(s[0]), s[1]])
    return np.array([s[0], math.cos(s[1]), math.sin(s[1]), s[2], s[3]])


def state_from_observation(spec: EnvSpec, obs) -> EnvState:
    """Inverse of ``observe`` (up to angle winding); used to seed rollouts."""
    obs = np.asarray(obs, dtype=float)
    if spec.id is EnvId.MOUNTAIN_CAR:
        internal = obs.copy()
    elif spec.id is EnvId.PENDULUM:
        internal = np.array([math.atan2(obs[1], obs[0]), obs[2]])
    else:
        internal = np.array([obs[0], math.atan2(obs[2], obs[1]), obs[3], obs[4]])
    return EnvState(internal=internal, step_count=0)


def stage_cost(spec: EnvSpec, obs, action):
    """Per-step task cost.

    Accepts plain arrays of shape (..., obs_dim) / (..., action_dim) or
    autodiff duals, so the same code serves execution scoring and
    gradient-based planning.
    """
    a2 = ad.sum(action * action, axis=-1)
    if spec.id is EnvId.MOUNTAIN_CAR:
        dx = obs[..., 0] - spec.physics["x_goal"]
        return 10.0 * dx * dx + 0.001 * a2
    if spec.id is EnvId.PENDULUM:
        c, s, thd = obs[..., 0], obs[..., 1], obs[..., 2]
        up = 1.0 - c
        return 100.0 * up * up + 0.1 * s * s + 0.1 * thd * thd + 0.001 * a2
    x, c, s, xd, thd = (obs[..., i] for i in range(5))
    up = 1.0 - c
    return (100.0 * x * x + 100.0 * up * up + 0.1 * s * s
            + 0.1 * xd * xd + 0.1 * thd * thd + 0.1 * a2)


def observation_dynamics(spec: EnvSpec):
    """Raw one-step dynamics in observation space, f(obs, action) -> next obs.

    No termination or clip accounting; used for oracle sampling and test
    rollouts from arbitrary start states.
    """

    def f(obs, action):
        state = state_from_observation(spec, obs)
        action = np.atleast_1d(np.asarray(action, dtype=float))
        clipped = np.clip(action, spec.action_low, spec.action_high)
        nxt = _advance(spec, state.internal, float(clipped[0]))
        return observe(spec, EnvState(internal=nxt))

    return f


def planning_bounds(spec: EnvSpec):
    """Observation-space box the planner may use as state bounds.

    Mirrors the termination limits (position bounds / cart limit); unbounded
    dimensions are +-inf.  Returns None for environments without hard limits.
    """
    if spec.id is EnvId.MOUNTAIN_CAR:
        p = spec.physics
        low = np.array([p["x_min"], -np.inf])
        high = np.array([p["x_max"], np.inf])
        return low, high
    if spec.id is EnvId.CARTPOLE:
        lim = spec.physics["x_limit"]
        low = np.array([-lim, -np.inf, -np.inf, -np.inf, -np.inf])
        high = np.array([lim, np.inf, np.inf, np.inf, np.inf])
        return low, high
    return None


def angle_to_upright(spec: EnvSpec, obs) -> float:
    """Absolute angular distance of the pole/pendulum from upright, in rad."""
    obs = np.asarray(obs, dtype=float)
    if spec.id is EnvId.PENDULUM:
        c, s = obs[0], obs[1]
    elif spec.id is EnvId.CARTPOLE:
        c, s = obs[1], obs[2]
    else:
        raise InvalidInputError("angle_to_upright needs an angular environment")
    return abs(math.atan2(s, c))


def with_overrides(spec: EnvSpec, **overrides) -> EnvSpec:
    """Copy of ``spec`` with replaced fields or physics constants."""
    physics = dict(spec.physics)
    top = {}
    for key, value in overrides.items():
        if key in physics:
            physics[key] = value
        else:
            top[key] = value
    return replace(spec, physics=physics, **top)
