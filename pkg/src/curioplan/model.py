"""Learned forward model: feature map + weight belief + target convention.

Ties together the feature expansion and the Bayesian regression into the
object the planner and evaluator consume.  By default the regression
predicts observation *deltas* (next - current), which conditions the
problem better than absolute next states; the flag is configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import blr, rff
from .errors import InsufficientDataError, InvalidInputError


@dataclass(frozen=True)
class Transitions:
    """Batch of one-step transitions in observation space."""

    obs: np.ndarray       # (N, obs_dim)
    act: np.ndarray       # (N, action_dim)
    next_obs: np.ndarray  # (N, obs_dim)

    def __post_init__(self):
        for name in ("obs", "act", "next_obs"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.obs.shape[0] == self.act.shape[0] == self.next_obs.shape[0]):
            raise InvalidInputError("transition arrays must have equal row counts")

    def __len__(self) -> int:
        return self.obs.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        """Model inputs: observation-action concatenation."""
        return np.concatenate([self.obs, self.act], axis=1)

    def targets(self, delta: bool) -> np.ndarray:
        return self.next_obs - self.obs if delta else self.next_obs


def concat_transitions(parts) -> Transitions:
    parts = [p for p in parts if len(p)]
    if not parts:
        raise InsufficientDataError("no transitions to concatenate")
    return Transitions(
        obs=np.concatenate([p.obs for p in parts]),
        act=np.concatenate([p.act for p in parts]),
        next_obs=np.concatenate([p.next_obs for p in parts]),
    )


@dataclass(frozen=True)
class LearnedModel:
    fmap: rff.FeatureMap
    belief: blr.GaussianBelief
    delta: bool = True

    def features(self, obs, act):
        """Feature rows for (obs, act); generic over autodiff duals."""
        return rff.featurize(self.fmap, ad.concat([obs, act], axis=-1))

    def dynamics(self):
        """Mean one-step dynamics f(s, a) -> E[s'], usable by the planner."""
        weights = self.belief.mean

        def f(s, a):
            out = self.features(s, a) @ weights
            return s + out if self.delta else out

        return f

    def predict_next(self, obs, act):
        """Mean next observation and shared predictive variance."""
        phi = self.features(np.asarray(obs, float), np.asarray(act, float))
        mean, var = blr.predict(self.belief, phi)
        nxt = np.asarray(obs, float) + mean if self.delta else mean
        return nxt, var

    def log_likelihood_rows(self, transitions: Transitions) -> np.ndarray:
        phi = rff.featurize(self.fmap, transitions.inputs)
        return blr.log_likelihood_rows(self.belief, phi, transitions.targets(self.delta))


@dataclass(frozen=True)
class ModelSettings:
    """Everything needed to (re)fit a model from transitions."""

    m: int
    alpha: float = 1.0
    beta_mode: str = "refit"         # refit | episode1 | fixed
    beta_value: float = 1.0          # initial / fixed noise precision
    bandwidth_mode: str = "pairwise"  # pairwise | evidence | fixed
    bandwidth_value: tuple = ()       # used when bandwidth_mode == "fixed"
    bandwidth_floor: float = 1e-3
    bandwidth_refit: bool = True
    delta: bool = True
    holdout_frac: float = 0.2
    beta_lo: float = 1e-4
    beta_hi: float = 1e8


def initial_model(settings: ModelSettings, n: int, d: int, fmap_seed: int) -> LearnedModel:
    """Zero-data model with unit bandwidth (replaced after the first episode)."""
    if settings.bandwidth_mode == "fixed":
        bw = np.asarray(settings.bandwidth_value, dtype=float)
    else:
        bw = np.ones(n)
    fmap = rff.sample_feature_map(n, settings.m, bw, fmap_seed)
    belief = blr.prior_belief(settings.m, d, settings.alpha, settings.beta_value)
    return LearnedModel(fmap=fmap, belief=belief, delta=settings.delta)


def fit_beta(phi: np.ndarray, targets: np.ndarray, alpha: float,
             holdout_frac: float = 0.2,
             lo: float = 1e-4, hi: float = 1e8, coarse: int = 13,
             iters: int = 30) -> float:
    """Noise precision maximizing held-out log-likelihood.

    Scoring pools contiguous-block cross-validation folds (each fifth of
    the rows held out once, the rest as training).  Contiguous blocks
    matter: random row holdout on smooth trajectories only measures
    interpolation and drives the precision to the search ceiling.  A coarse
    log-grid brackets the optimum, then golden-section search refines it in
    log space.  Deterministic.
    """
    phi = np.asarray(phi, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if phi.shape[0] < 5:
        raise InsufficientDataError("need at least 5 rows to fit beta")
    n_rows, m = phi.shape
    d = targets.shape[1]
    n_folds = max(2, int(round(1.0 / holdout_frac)))
    edges = np.linspace(0, n_rows, n_folds + 1).astype(int)
    gram_all = phi.T @ phi
    cross_all = phi.T @ targets
    folds = []
    for f in range(n_folds):
        sl = slice(edges[f], edges[f + 1])
        gram_h = phi[sl].T @ phi[sl]
        folds.append((gram_all - gram_h, cross_all - phi[sl].T @ targets[sl],
                      phi[sl], targets[sl]))

    def score(log_beta: float) -> float:
        beta = math.exp(log_beta)
        total, count = 0.0, 0
        for gram_t, cross_t, phi_h, y_h in folds:
            precision = alpha * np.eye(m) + beta * gram_t
            belief = blr.GaussianBelief(mean=np.zeros((m, d)),
                                        precision=0.5 * (precision + precision.T),
                                        beta=beta)
            mean = np.asarray(
                np.linalg.solve(belief.precision, beta * cross_t))
            object.__setattr__(belief, "mean", mean)
            total += float(np.sum(blr.log_likelihood_rows(belief, phi_h, y_h)))
            count += phi_h.shape[0]
        return total / count

    grid = np.linspace(math.log(lo), math.log(hi), coarse)
    values = [score(g) for g in grid]
    best = int(np.argmax(values))
    a = grid[max(0, best - 1)]
    b = grid[min(len(grid) - 1, best + 1)]
    # golden-section search on the bracketing interval
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = score(c), score(e)
    for _ in range(iters):
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = score(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = score(e)
    return math.exp(0.5 * (a + b))


def refit_model(transitions: Transitions, settings: ModelSettings, fmap_seed: int,
                beta: float | None = None, bandwidth=None) -> LearnedModel:
    """Fit a fresh model on all transitions.

    Bandwidth and beta follow the settings unless pinned by the arguments
    (used to keep them frozen across episodes).
    """
    if len(transitions) < 2:
        raise InsufficientDataError("need at least 2 transitions to fit a model")
    inputs = transitions.inputs
    targets = transitions.targets(settings.delta)
    n = inputs.shape[1]
    if bandwidth is None:
        if settings.bandwidth_mode == "pairwise":
            bandwidth = rff.fit_bandwidth(inputs, floor=settings.bandwidth_floor)
        elif settings.bandwidth_mode == "evidence":
            bandwidth = rff.fit_bandwidth_evidence(
                inputs, targets, settings.m, fmap_seed,
                alpha=settings.alpha, beta=settings.beta_value,
                floor=settings.bandwidth_floor)
        elif settings.bandwidth_mode == "fixed":
            bandwidth = np.asarray(settings.bandwidth_value, dtype=float)
        else:
            raise InvalidInputError(f"unknown bandwidth mode {settings.bandwidth_mode!r}")
    fmap = rff.sample_feature_map(n, settings.m, bandwidth, fmap_seed)
    phi = rff.featurize(fmap, inputs)
    if beta is None:
        if settings.beta_mode == "fixed":
            beta = settings.beta_value
        else:
            beta = fit_beta(phi, targets, settings.alpha,
                            holdout_frac=settings.holdout_frac,
                            lo=settings.beta_lo, hi=settings.beta_hi)
    d = targets.shape[1]
    prior = blr.prior_belief(settings.m, d, settings.alpha, beta)
    belief = blr.posterior_update(prior, blr.Dataset(phi, targets))
    return LearnedModel(fmap=fmap, belief=belief, delta=settings.delta)


def update_model(model: LearnedModel, transitions: Transitions) -> LearnedModel:
    """Incremental posterior update with a frozen feature map (Alg.-style path)."""
    phi = rff.featurize(model.fmap, transitions.inputs)
    belief = blr.posterior_update(model.belief, blr.Dataset(phi, transitions.targets(model.delta)))
    return replace(model, belief=belief)


def save_model(path, model: LearnedModel):
    """Snapshot: belief + feature map (seed, bandwidth) + target convention."""
    blr.save_belief(path, model.belief,
                    fmap_seed=np.asarray(model.fmap.seed),
                    fmap_bandwidth=model.fmap.bandwidth,
                    fmap_m=np.asarray(model.fmap.m),
                    fmap_n=np.asarray(model.fmap.n),
                    delta=np.asarray(model.delta))


def load_model(path) -> LearnedModel:
    belief, extra = blr.load_belief(path)
    fmap = rff.sample_feature_map(int(extra["fmap_n"]), int(extra["fmap_m"]),
                                  extra["fmap_bandwidth"], int(extra["fmap_seed"]))
    return LearnedModel(fmap=fmap, belief=belief, delta=bool(extra["delta"]))
