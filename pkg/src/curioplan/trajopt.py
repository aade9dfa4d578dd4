"""Multiple-shooting trajectory optimization.

The nonlinear program has decision variables z = (actions a_0..a_{T-1},
states s_1..s_T) with the dynamics imposed as equality constraints
s_t = f(s_{t-1}, a_{t-1}).  Splitting the trajectory this way keeps the
problem well conditioned (no iterated dynamics composition) at the price of
more variables; the constraint Jacobian is block sparse and is assembled
from row-local forward-mode derivatives of f.

The solver is an augmented Lagrangian outer loop around bound-constrained
L-BFGS-B inner solves.  Feasible iterates are tracked as candidates and the
best one is returned, so a converged solve never reports an objective worse
than its (dynamically feasible) initialization.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from . import autodiff as ad
from .errors import NumericalError


@dataclass
class SolverOptions:
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    max_outer: int = 12
    max_inner: int = 400
    feas_tol: float = 1e-4
    grad_tol: float = 1e-6
    violation_shrink: float = 0.25  # required per-outer violation decrease
    # keep iterating below feas_tol by this factor so multipliers settle and
    # the primal point stops exploiting constraint slack
    feas_stop_factor: float = 1e-2
    penalty_max: float = 1e10
    objective_rel_tol: float = 1e-8  # outer-loop stall detection
    trace_path: Optional[str] = None


@dataclass
class SolveStats:
    iterations: int
    constraint_violation: float
    objective: float
    converged: bool
    wall_time: float


@dataclass
class ShootingProblem:
    """One trajectory-optimization solve.

    ``dynamics`` maps (s, a) -> mean next state, vectorized over leading
    axes and generic over autodiff duals.  ``objective`` is minimized and
    must provide ``value(s0, actions, states)`` and
    ``value_and_grad(s0, actions, states) -> (value, d/dactions, d/dstates)``.
    """

    s0: np.ndarray
    T: int
    action_dim: int
    obs_dim: int
    dynamics: Callable
    objective: object
    action_low: np.ndarray
    action_high: np.ndarray
    obs_low: Optional[np.ndarray] = None
    obs_high: Optional[np.ndarray] = None

    def __post_init__(self):
        self.s0 = np.asarray(self.s0, dtype=float)
        self.action_low = np.broadcast_to(np.asarray(self.action_low, float),
                                          (self.action_dim,))
        self.action_high = np.broadcast_to(np.asarray(self.action_high, float),
                                           (self.action_dim,))


def rollout_mean(dynamics, s0, actions) -> np.ndarray:
    """Iterate the mean dynamics from s0; returns states s_1..s_T."""
    s = np.asarray(s0, dtype=float)
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    states = np.empty((actions.shape[0], s.shape[0]))
    for t in range(actions.shape[0]):
        s = np.asarray(ad.value(dynamics(s, actions[t])), dtype=float)
        if not np.all(np.isfinite(s)):
            raise NumericalError(f"non-finite state during rollout at step {t}")
        states[t] = s
    return states


def _pack(actions, states):
    return np.concatenate([np.ravel(actions), np.ravel(states)])


def _unpack(problem, z):
    na = problem.T * problem.action_dim
    actions = z[:na].reshape(problem.T, problem.action_dim)
    states = z[na:].reshape(problem.T, problem.obs_dim)
    return actions, states


def _prev_states(problem, states):
    return np.vstack([problem.s0[None, :], states[:-1]])


def _dynamics_rows(problem, actions, states):
    """Row t value f(s_{t-1}, a_{t-1}) and local Jacobians (d/ds, d/da)."""
    prev = _prev_states(problem, states)
    n_s = problem.obs_dim
    seeded = ad.seed_rows(np.hstack([prev, actions]))
    out = problem.dynamics(seeded[:, :n_s], seeded[:, n_s:])
    if not isinstance(out, ad.Dual):
        out = ad.Dual(np.asarray(out, float),
                      np.zeros(out.shape + (n_s + problem.action_dim,)))
    return out.val, out.jac[:, :, :n_s], out.jac[:, :, n_s:]


def constraint_values(problem, actions, states) -> np.ndarray:
    """Shooting defects c_t = s_t - f(s_{t-1}, a_{t-1}), shape (T, obs_dim)."""
    prev = _prev_states(problem, states)
    pred = ad.value(problem.dynamics(prev, actions))
    return states - pred


def constraint_jacobian(problem, actions, states) -> np.ndarray:
    """Dense Jacobian of the flattened constraints w.r.t. z (test-sized problems)."""
    T, k, n_s = problem.T, problem.action_dim, problem.obs_dim
    _, js, ja = _dynamics_rows(problem, actions, states)
    nz = T * k + T * n_s
    jac = np.zeros((T * n_s, nz))
    for t in range(T):
        rows = slice(t * n_s, (t + 1) * n_s)
        jac[rows, T * k + t * n_s: T * k + (t + 1) * n_s] = np.eye(n_s)
        jac[rows, t * k:(t + 1) * k] = -ja[t]
        if t >= 1:
            jac[rows, T * k + (t - 1) * n_s: T * k + t * n_s] = -js[t]
    return jac


def objective_gradient(problem, actions, states) -> np.ndarray:
    """Flat gradient of the problem objective w.r.t. z."""
    _, ga, gs = problem.objective.value_and_grad(problem.s0, actions, states)
    return _pack(ga, gs)


def gradient(problem, actions, states):
    """Exact objective gradient and dense constraint Jacobian at a point."""
    return objective_gradient(problem, actions, states), constraint_jacobian(problem, actions, states)


def _jac_t_vec(problem, js, ja, v):
    """J^T v from row-local dynamics Jacobians; v has shape (T, obs_dim)."""
    ga = -np.einsum("tij,ti->tj", ja, v)
    gs = v.copy()
    gs[:-1] -= np.einsum("tij,ti->tj", js[1:], v[1:])
    return ga, gs


def _violation(c) -> float:
    return float(np.max(np.abs(c))) if c.size else 0.0


def screen_inits(problem: "ShootingProblem", action_candidates,
                 truncate_at_bounds: bool = True):
    """Pick the most promising initialization among candidate action sequences.

    Each candidate is clipped to bounds, rolled out through the mean
    dynamics (making it dynamically feasible), and scored by the objective;
    the best-scoring (actions, states) pair is returned.  When the problem
    has a state box and ``truncate_at_bounds`` is set, a candidate is
    scored only on its prefix inside the box: states past the first exit
    can never be visited (the episode would have ended), so value
    accumulated there is fiction.  This is a cheap global screen in front
    of the local solve.
    """
    best = None
    for cand in action_candidates:
        actions = np.clip(np.atleast_2d(np.asarray(cand, dtype=float)),
                          problem.action_low, problem.action_high)
        try:
            states = rollout_mean(problem.dynamics, problem.s0, actions)
        except NumericalError:
            continue
        n_score = states.shape[0]
        if truncate_at_bounds and problem.obs_low is not None:
            outside = np.any((states < problem.obs_low) | (states > problem.obs_high),
                             axis=1)
            hits = np.nonzero(outside)[0]
            if hits.size:
                n_score = int(hits[0]) + 1
        value = problem.objective.value(problem.s0, actions[:n_score], states[:n_score])
        if np.isfinite(value) and (best is None or value < best[0]):
            best = (value, actions, states)
    if best is None:
        raise NumericalError("no finite initialization candidate")
    return best[1], best[2]


def block_actions(rng, T: int, k: int, low, high, max_segments: int = 4) -> np.ndarray:
    """Random piecewise-constant action sequence over {low, 0, high} levels.

    Bang-bang segments inject energy far more effectively than iid noise in
    underactuated systems, and coast (zero) segments let them swing at the
    natural frequency, which makes these good screening candidates for
    far-reaching trajectories.
    """
    n_seg = int(rng.integers(1, max_segments + 1))
    actions = np.empty((T, k))
    if n_seg > 1:
        cuts = np.sort(rng.choice(np.arange(1, T), size=n_seg - 1, replace=False))
    else:
        cuts = np.array([], dtype=int)
    segments = np.split(np.arange(T), cuts)
    low = np.broadcast_to(np.asarray(low, float), (k,))
    high = np.broadcast_to(np.asarray(high, float), (k,))
    zero = np.clip(np.zeros(k), low, high)
    levels = (low, zero, high)
    for seg in segments:
        pick = rng.integers(0, 3, size=k)
        actions[seg] = np.stack([levels[pick[j]][j] for j in range(k)])
    return actions


def square_wave_actions(rng, T: int, k: int, low, high,
                        min_half: int = 3) -> np.ndarray:
    """Random square-wave excitation between the action corners.

    Periodic sign flips at a random half-period/phase are classic
    persistent-excitation inputs from system identification; near a
    resonance they pump oscillatory systems far more effectively than
    random switching.
    """
    low = np.broadcast_to(np.asarray(low, float), (k,))
    high = np.broadcast_to(np.asarray(high, float), (k,))
    half = int(rng.integers(min_half, max(min_half + 1, T // 3)))
    phase = int(rng.integers(0, 2 * half))
    wave = ((np.arange(T) + phase) // half) % 2
    actions = np.empty((T, k))
    for j in range(k):
        actions[:, j] = np.where(wave == 0, low[j], high[j])
    return actions


def solve(problem: ShootingProblem, init=None, options: SolverOptions | None = None):
    """Solve the shooting problem; returns (actions, states, stats).

    ``init`` may be (actions, states) or (actions, None); missing states are
    filled by a mean rollout, which makes the initialization dynamically
    feasible.  On non-convergence the best iterate is feasibility-restored
    and returned with ``converged=False`` rather than raising.
    """
    opts = options or SolverOptions()
    t_start = time.perf_counter()
    T, k, n_s = problem.T, problem.action_dim, problem.obs_dim

    if init is None:
        actions0 = np.zeros((T, k))
    else:
        actions0 = np.atleast_2d(np.asarray(init[0], dtype=float)).copy()
    actions0 = np.clip(actions0, problem.action_low, problem.action_high)
    if init is not None and init[1] is not None:
        states0 = np.asarray(init[1], dtype=float).copy()
    else:
        states0 = rollout_mean(problem.dynamics, problem.s0, actions0)

    bounds = [(lo, hi) for lo, hi in
              zip(np.tile(problem.action_low, T), np.tile(problem.action_high, T))]
    if problem.obs_low is None:
        bounds += [(None, None)] * (T * n_s)
    else:
        bounds += [(lo, hi) for lo, hi in
                   zip(np.tile(problem.obs_low, T), np.tile(problem.obs_high, T))]

    lam = np.zeros((T, n_s))
    rho = opts.penalty_init

    def merit(z, lam, rho):
        a, s = _unpack(problem, z)
        fval, js, ja = _dynamics_rows(problem, a, s)
        c = s - fval
        obj, goa, gos = problem.objective.value_and_grad(problem.s0, a, s)
        v = rho * c - lam
        ga, gs = _jac_t_vec(problem, js, ja, v)
        value = obj - float(np.sum(lam * c)) + 0.5 * rho * float(np.sum(c * c))
        grad = _pack(goa + ga, gos + gs)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite merit value or gradient in shooting solve")
        return value, grad

    z = _pack(actions0, states0)
    total_inner = 0
    trace_rows = []
    best_feasible = None  # (objective, z, violation) fallback among feasible iterates
    least_infeasible = None

    def evaluate(z):
        nonlocal best_feasible, least_infeasible
        a, s = _unpack(problem, z)
        c = constraint_values(problem, a, s)
        viol = _violation(c)
        obj = problem.objective.value(problem.s0, a, s)
        if viol <= opts.feas_tol and (best_feasible is None or obj < best_feasible[0]):
            best_feasible = (obj, z.copy(), viol)
        if least_infeasible is None or viol < least_infeasible[0]:
            least_infeasible = (viol, z.copy())
        return obj, viol

    init_obj, init_viol = evaluate(z)
    z_init = z.copy()
    prev_obj, prev_viol = init_obj, init_viol
    trace_rows.append((0, init_obj, init_viol))
    stop_viol = opts.feas_tol * opts.feas_stop_factor

    for outer in range(1, opts.max_outer + 1):
        res = minimize(merit, z, args=(lam, rho), jac=True, method="L-BFGS-B",
                       bounds=bounds,
                       options=dict(maxiter=opts.max_inner, maxcor=20,
                                    ftol=1e-14, gtol=opts.grad_tol))
        z = res.x
        total_inner += int(res.nit)
        c = constraint_values(problem, *_unpack(problem, z))
        obj, viol = evaluate(z)
        trace_rows.append((outer, obj, viol))
        rel = abs(prev_obj - obj) / max(1.0, abs(obj))
        if viol <= stop_viol and prev_viol <= opts.feas_tol and rel < opts.objective_rel_tol:
            break
        lam = lam - rho * c
        if viol > opts.violation_shrink * prev_viol:
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
        prev_obj, prev_viol = obj, viol

    a, s = _unpack(problem, z)
    viol = _violation(constraint_values(problem, a, s))
    obj = problem.objective.value(problem.s0, a, s)
    if viol <= opts.feas_tol:
        converged = True
        # a feasible solve must never report worse than its feasible init
        if init_viol <= opts.feas_tol and init_obj < obj - 1e-12:
            obj, z, viol = init_obj, z_init, init_viol
    elif best_feasible is not None:
        obj, z, viol = best_feasible
        converged = True
    else:
        # feasibility restoration from the least-infeasible iterate
        z = least_infeasible[1]

        def restore(z):
            a, s = _unpack(problem, z)
            fval, js, ja = _dynamics_rows(problem, a, s)
            c = s - fval
            ga, gs = _jac_t_vec(problem, js, ja, c)
            return 0.5 * float(np.sum(c * c)), _pack(ga, gs)

        res = minimize(restore, z, jac=True, method="L-BFGS-B", bounds=bounds,
                       options=dict(maxiter=opts.max_inner, maxcor=20))
        z = res.x
        total_inner += int(res.nit)
        a, s = _unpack(problem, z)
        viol = _violation(constraint_values(problem, a, s))
        obj = problem.objective.value(problem.s0, a, s)
        converged = False

    if opts.trace_path:
        with open(opts.trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["outer_iteration", "objective", "violation"])
            writer.writerows(trace_rows)

    actions, states = _unpack(problem, z)
    stats = SolveStats(iterations=total_inner, constraint_violation=viol,
                       objective=obj, converged=converged,
                       wall_time=time.perf_counter() - t_start)
    return actions, states, stats
