"""Exploration objectives for the shooting problem.

Two acquisition functions score a planned trajectory by its learning value:

* uncertainty sampling -- the summed predictive variance along the
  trajectory (maximized); the weight covariance stays fixed during a solve,
  so each term is beta^-1 + phi^T Sigma phi at the mean-propagated input.
* expected variance reduction -- the posterior weight entropy that *would*
  result from appending the planned feature rows to the dataset
  (minimized); a D-optimality criterion on the hypothetical precision
  Sigma^-1 + beta sum_t phi_t phi_t^T.

Both are differentiable in all decision variables; gradients are assembled
from row-local forward-mode Jacobians of the feature map.  The prediction
at step t uses the input (s_{t-1}, a_{t-1}), so objective rows share the
layout used by the shooting constraints.

The module also provides the per-transition exploration bonuses (squared
prediction error, entropy-difference information gain) used by bonus-based
baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve

from . import autodiff as ad
from . import blr, rff
from .errors import InvalidInputError

# Beyond these sizes the hypothetical-posterior objective becomes too
# expensive to differentiate; the CLI refuses it unless forced.
EVR_MAX_FEATURES = 40
EVR_MAX_HORIZON = 150


@dataclass(frozen=True)
class ObjectiveKind:
    """Objective selector: 'us', 'evr', or 'task', plus optional weights.

    ``weights`` scales the per-timestep terms of the uncertainty-sampling
    and task objectives (default: uniform); the variance-reduction
    objective has no per-step decomposition and ignores them.
    """

    kind: str
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("us", "evr", "task"):
            raise InvalidInputError(f"unknown objective kind {self.kind!r}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0):
                raise InvalidInputError("weights must be nonnegative")
            object.__setattr__(self, "weights", w)


def check_evr_gate(m: int, horizon: int, force: bool = False):
    if force:
        return
    if m > EVR_MAX_FEATURES or horizon > EVR_MAX_HORIZON:
        raise InvalidInputError(
            f"variance-reduction objective gated off for m={m} (max {EVR_MAX_FEATURES}), "
            f"T={horizon} (max {EVR_MAX_HORIZON}); force to override")


def _weights(weights, T: int) -> np.ndarray:
    if weights is None:
        return np.ones(T)
    w = np.asarray(weights, dtype=float)
    if w.shape != (T,):
        raise InvalidInputError(f"weights must have shape ({T},)")
    return w


def _input_rows(s0, actions, states):
    """Rows (s_{t-1}, a_{t-1}) for t = 1..T as one (T, n_s + k) matrix."""
    prev = np.vstack([np.asarray(s0, float)[None, :], np.asarray(states, float)[:-1]])
    return np.hstack([prev, np.asarray(actions, float)])


def _scatter_rows(gx, T: int, n_s: int):
    """Map d/d(input rows) into (d/dactions, d/dstates); drops the fixed s0."""
    ga = gx[:, n_s:].copy()
    gs = np.zeros((T, n_s))
    gs[: T - 1] = gx[1:, :n_s]
    return ga, gs


class UncertaintySampling:
    """Summed predictive variance along the planned trajectory (solver minimizes the negation)."""

    def __init__(self, belief: blr.GaussianBelief, fmap: rff.FeatureMap, weights=None):
        self.belief = belief
        self.fmap = fmap
        self.weights = weights

    def acquisition(self, s0, actions, states) -> float:
        """The maximized quantity: sum_t w_t (beta^-1 + phi^T Sigma phi)."""
        rows = _input_rows(s0, actions, states)
        w = _weights(self.weights, rows.shape[0])
        phi = rff.featurize(self.fmap, rows)
        quad = np.sum(phi * blr.covariance_apply(self.belief, phi), axis=-1)
        return float(np.sum(w * (1.0 / self.belief.beta + quad)))

    def value(self, s0, actions, states) -> float:
        return -self.acquisition(s0, actions, states)

    def value_and_grad(self, s0, actions, states):
        T = np.asarray(actions).shape[0]
        n_s = np.asarray(s0).shape[0]
        rows = _input_rows(s0, actions, states)
        w = _weights(self.weights, T)
        phi = rff.featurize(self.fmap, ad.seed_rows(rows))
        u = blr.covariance_apply(self.belief, phi)
        quad = ad.sum(phi * u, axis=-1)
        value = float(np.sum(w * (1.0 / self.belief.beta + quad.val)))
        gx = w[:, None] * quad.jac
        ga, gs = _scatter_rows(-gx, T, n_s)
        return -value, ga, gs


class ExpectedVarianceReduction:
    """Posterior weight entropy after hypothetically observing the plan (minimized)."""

    def __init__(self, prior: blr.GaussianBelief, fmap: rff.FeatureMap):
        self.prior = prior
        self.fmap = fmap

    def _entropy_of(self, phi_rows: np.ndarray):
        prec = self.prior.precision + self.prior.beta * phi_rows.T @ phi_rows
        prec = 0.5 * (prec + prec.T)
        chol = blr.chol_spd(prec)
        log_det_sigma = -2.0 * float(np.sum(np.log(np.diag(chol))))
        m, d = self.prior.m, self.prior.d
        return d * (0.5 * log_det_sigma + 0.5 * m * (blr.LOG_2PI + 1.0)), chol

    def value(self, s0, actions, states) -> float:
        rows = _input_rows(s0, actions, states)
        ent, _ = self._entropy_of(rff.featurize(self.fmap, rows))
        return ent

    def value_and_grad(self, s0, actions, states):
        T = np.asarray(actions).shape[0]
        n_s = np.asarray(s0).shape[0]
        rows = _input_rows(s0, actions, states)
        phi = rff.featurize(self.fmap, ad.seed_rows(rows))
        ent, chol = self._entropy_of(phi.val)
        # d entropy / d phi_t = -d * beta * Sigma_hyp phi_t
        u = cho_solve((chol, True), phi.val.T).T
        gx = -self.prior.d * self.prior.beta * np.einsum("tm,tmn->tn", u, phi.jac)
        ga, gs = _scatter_rows(gx, T, n_s)
        return ent, ga, gs


class TaskCost:
    """Accumulated stage cost sum_t c(s_t, a_t) plus a zero-action terminal term."""

    def __init__(self, cost_fn: Callable, action_dim: int, weights=None):
        self.cost_fn = cost_fn
        self.action_dim = action_dim
        self.weights = weights

    def value(self, s0, actions, states) -> float:
        rows = _input_rows(s0, actions, states)
        n_s = np.asarray(s0).shape[0]
        w = _weights(self.weights, rows.shape[0])
        stage = self.cost_fn(rows[:, :n_s], rows[:, n_s:])
        terminal = self.cost_fn(np.asarray(states, float)[-1], np.zeros(self.action_dim))
        return float(np.sum(w * stage) + terminal)

    def value_and_grad(self, s0, actions, states):
        T = np.asarray(actions).shape[0]
        n_s = np.asarray(s0).shape[0]
        rows = _input_rows(s0, actions, states)
        w = _weights(self.weights, T)
        seeded = ad.seed_rows(rows)
        stage = self.cost_fn(seeded[:, :n_s], seeded[:, n_s:])
        gx = w[:, None] * stage.jac
        ga, gs = _scatter_rows(gx, T, n_s)
        term = self.cost_fn(ad.seed(np.asarray(states, float)[-1]), np.zeros(self.action_dim))
        if isinstance(term, ad.Dual):
            gs[-1] += term.jac.reshape(-1)
            term = term.val
        value = float(np.sum(w * stage.val) + term)
        return value, ga, gs


def us_objective(belief, fmap, s0, actions, states, weights=None) -> float:
    """Uncertainty-sampling acquisition value (to MAXIMIZE)."""
    return UncertaintySampling(belief, fmap, weights).acquisition(s0, actions, states)


def evr_objective(prior, fmap, s0, actions, states) -> float:
    """Hypothetical-posterior entropy (to MINIMIZE)."""
    if np.asarray(actions).size == 0:
        return blr.entropy(prior)
    return ExpectedVarianceReduction(prior, fmap).value(s0, actions, states)


def pe_bonus(belief, fmap, transition, delta: bool = True) -> float:
    """Squared prediction error ||s' - E[s'|s,a]||^2 for one transition."""
    s, a, s_next = (np.asarray(v, dtype=float) for v in transition)
    phi = rff.featurize(fmap, np.concatenate([s, a]))
    pred = phi @ belief.mean
    if delta:
        pred = s + pred
    resid = s_next - pred
    return float(resid @ resid)


def ig_bonus(belief_before, belief_after) -> float:
    """Information gain: entropy drop between successive beliefs (>= 0)."""
    return blr.entropy(belief_before) - blr.entropy(belief_after)


def make_objective(kind: ObjectiveKind, belief, fmap, cost_fn=None, action_dim=1,
                   horizon=None, force_evr=False):
    """Instantiate the solver-facing (minimization) objective for a kind."""
    if kind.kind == "us":
        return UncertaintySampling(belief, fmap, kind.weights)
    if kind.kind == "evr":
        check_evr_gate(fmap.m, horizon if horizon is not None else 0, force=force_evr)
        return ExpectedVarianceReduction(belief, fmap)
    if cost_fn is None:
        raise InvalidInputError("task objective needs a stage-cost function")
    return TaskCost(cost_fn, action_dim, kind.weights)
