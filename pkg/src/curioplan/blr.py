"""Multi-output Bayesian linear regression over feature vectors.

The posterior over weights is Gaussian and is parameterized by its
*precision*: observing a batch (Phi, Y) with noise precision beta maps

    precision* = precision + beta Phi^T Phi
    mu*        = precision*^-1 (precision mu + beta Phi^T Y)   (per column)

All outputs share one covariance (it depends only on the features); each
output dimension has its own mean column.  Covariance-dependent quantities
(predictive variance, entropy, means) are obtained through a Cholesky
factorization of the precision, never an explicit inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, cholesky

from . import autodiff as ad
from .errors import InvalidInputError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)

# Near-singular factorizations get a small diagonal jitter first.
COND_LIMIT = 1e12
JITTER = 1e-8


def chol_spd(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Adds ``JITTER * I`` when the condition number exceeds ``COND_LIMIT``.
    Raises :class:`NumericalError` with a condition diagnostic on failure.
    """
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        mat = mat + JITTER * np.eye(mat.shape[0])
    try:
        return cholesky(mat, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise NumericalError(f"Cholesky factorization failed (cond={cond:.3e})") from exc


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian over regression weights: one mean column per output, shared covariance."""

    mean: np.ndarray       # (m, d)
    precision: np.ndarray  # (m, m), symmetric positive definite
    beta: float            # observation noise precision

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_2d(np.asarray(self.mean, dtype=float)))
        if self.mean.shape[0] != self.precision.shape[0]:
            raise InvalidInputError("mean rows must match precision size")
        scale = max(1.0, float(np.max(np.abs(self.precision))))
        asym = float(np.max(np.abs(self.precision - self.precision.T)))
        if asym > 1e-10 * scale:
            raise InvalidInputError(f"precision asymmetry {asym / scale:.2e} exceeds 1e-10")
        if self.beta <= 0:
            raise InvalidInputError("beta must be positive")

    @property
    def m(self) -> int:
        return self.precision.shape[0]

    @property
    def d(self) -> int:
        return self.mean.shape[1]

    @cached_property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the precision (cached)."""
        return chol_spd(self.precision)


def prior_belief(m: int, d: int, alpha: float = 1.0, beta: float = 1.0) -> GaussianBelief:
    """Zero-mean isotropic prior with weight precision alpha."""
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    return GaussianBelief(mean=np.zeros((m, d)), precision=alpha * np.eye(m), beta=beta)


@dataclass(frozen=True)
class Dataset:
    """Design matrix and matching targets."""

    features: np.ndarray  # (N, m)
    targets: np.ndarray   # (N, d)

    def __post_init__(self):
        object.__setattr__(self, "features", np.atleast_2d(np.asarray(self.features, dtype=float)))
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        object.__setattr__(self, "targets", targets)
        if self.features.shape[0] != self.targets.shape[0]:
            raise InvalidInputError("features and targets must have equal row counts")
        if self.features.size and not np.all(np.isfinite(self.features)):
            raise InvalidInputError("non-finite features")
        if self.targets.size and not np.all(np.isfinite(self.targets)):
            raise InvalidInputError("non-finite targets")

    def __len__(self) -> int:
        return self.features.shape[0]


def posterior_update(prior: GaussianBelief, batch: Dataset) -> GaussianBelief:
    """Condition the belief on a batch of observations.

    The precision accumulates additively; the new mean solves the normal
    equations through a Cholesky factorization.  An empty batch returns the
    prior unchanged.
    """
    if len(batch) == 0:
        return prior
    if batch.features.shape[1] != prior.m:
        raise InvalidInputError("feature dim mismatch with belief")
    if batch.targets.shape[1] != prior.d:
        raise InvalidInputError("target dim mismatch with belief")
    phi, y = batch.features, batch.targets
    precision = prior.precision + prior.beta * phi.T @ phi
    precision = 0.5 * (precision + precision.T)
    rhs = prior.precision @ prior.mean + prior.beta * phi.T @ y
    posterior = GaussianBelief(mean=np.zeros_like(prior.mean), precision=precision,
                               beta=prior.beta)
    mean = cho_solve((posterior.chol, True), rhs)
    object.__setattr__(posterior, "mean", mean)
    return posterior


def covariance_apply(belief: GaussianBelief, x):
    """Sigma @ x for rows x of shape (..., m); accepts autodiff duals.

    The operator is linear and constant, so tangents map through the same
    solve as values.
    """
    if isinstance(x, ad.Dual):
        jac = np.swapaxes(x.jac, -1, -2)  # feature axis last for the solve
        jac = covariance_apply(belief, jac)
        return ad.Dual(covariance_apply(belief, x.val), np.swapaxes(jac, -1, -2))
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, belief.m)
    out = cho_solve((belief.chol, True), flat.T).T
    return out.reshape(x.shape)


def predict(belief: GaussianBelief, phi):
    """Predictive mean(s) and variance for feature rows phi of shape (..., m).

    The variance beta^-1 + phi^T Sigma phi is shared across output
    dimensions and never falls below beta^-1.
    """
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise InvalidInputError("non-finite features")
    if phi.shape[-1] != belief.m:
        raise InvalidInputError("feature dim mismatch with belief")
    mean = phi @ belief.mean
    quad = np.sum(phi * covariance_apply(belief, phi), axis=-1)
    var = 1.0 / belief.beta + quad
    return mean, var


def entropy(belief: GaussianBelief) -> float:
    """Posterior entropy, summed over the d independent output columns.

    Each column contributes 0.5 ln det Sigma + (m/2) ln(2 pi e); the shared
    covariance makes the total d times that.
    """
    log_det_sigma = -2.0 * float(np.sum(np.log(np.diag(belief.chol))))
    per_column = 0.5 * log_det_sigma + 0.5 * belief.m * (LOG_2PI + 1.0)
    return belief.d * per_column


def log_likelihood(belief: GaussianBelief, phi, y) -> float:
    """Log-density of target y (length d) under the predictive distribution."""
    y = np.asarray(y, dtype=float)
    mean, var = predict(belief, np.asarray(phi, dtype=float))
    resid = y - mean
    return float(-0.5 * y.shape[-1] * (LOG_2PI + math.log(var))
                 - 0.5 * np.sum(resid ** 2) / var)


def log_likelihood_rows(belief: GaussianBelief, phi, y) -> np.ndarray:
    """Per-row log-likelihoods for batched features (N, m) and targets (N, d)."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    mean, var = predict(belief, phi)
    resid = y - mean
    d = y.shape[1]
    return -0.5 * d * (LOG_2PI + np.log(var)) - 0.5 * np.sum(resid ** 2, axis=1) / var


def save_belief(path, belief: GaussianBelief, **extra):
    """Dump a belief (plus arbitrary extra arrays/scalars) to an .npz file.

    Keys: ``mean`` (m, d), ``precision`` (m, m), ``beta`` (scalar), and any
    extras verbatim.
    """
    np.savez(path, mean=belief.mean, precision=belief.precision,
             beta=np.asarray(belief.beta), **extra)


def load_belief(path) -> tuple[GaussianBelief, dict]:
    """Inverse of :func:`save_belief`; returns (belief, extras)."""
    with np.load(path, allow_pickle=False) as data:
        belief = GaussianBelief(mean=data["mean"], precision=data["precision"],
                                beta=float(data["beta"]))
        extras = {k: data[k] for k in data.files if k not in ("mean", "precision", "beta")}
    return belief, extras
