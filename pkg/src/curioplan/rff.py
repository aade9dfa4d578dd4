"""Random Fourier feature expansion of state-action inputs.

The i-th feature of an input x is sin(<P_i, x / nu> + phase_i) with a frozen
standard-normal projection P, uniform phases on [-pi, pi), and a per-dimension
bandwidth nu.  Linear regression on these features approximates a GP with an
exponentiated-quadratic kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import InsufficientDataError, InvalidInputError


@dataclass(frozen=True)
class FeatureMap:
    """Frozen sinusoidal feature expansion R^n -> [-1, 1]^m."""

    proj: np.ndarray       # (m, n) standard-normal draws
    phase: np.ndarray      # (m,) uniform on [-pi, pi)
    bandwidth: np.ndarray  # (n,) strictly positive input scales
    seed: int

    @property
    def m(self) -> int:
        return self.proj.shape[0]

    @property
    def n(self) -> int:
        return self.proj.shape[1]

    def with_bandwidth(self, bandwidth) -> "FeatureMap":
        bandwidth = _check_bandwidth(bandwidth, self.n)
        return replace(self, bandwidth=bandwidth)


def _check_bandwidth(bandwidth, n: int) -> np.ndarray:
    bandwidth = np.asarray(bandwidth, dtype=float)
    if bandwidth.shape == ():
        bandwidth = np.full(n, float(bandwidth))
    if bandwidth.shape != (n,):
        raise InvalidInputError(f"bandwidth must have shape ({n},)")
    if not np.all(bandwidth > 0):
        raise InvalidInputError("bandwidth must be strictly positive")
    return bandwidth


def sample_feature_map(n: int, m: int, bandwidth, seed: int) -> FeatureMap:
    """Draw a feature map; identical (n, m, bandwidth, seed) reproduce it exactly."""
    if n < 1 or m < 1:
        raise InvalidInputError("n and m must be >= 1")
    bandwidth = _check_bandwidth(bandwidth, n)
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((m, n))
    phase = rng.uniform(-math.pi, math.pi, size=m)
    return FeatureMap(proj=proj, phase=phase, bandwidth=bandwidth, seed=int(seed))


def featurize(fmap: FeatureMap, x):
    """Feature vector(s) for x of shape (..., n); components lie in [-1, 1].

    Accepts autodiff duals, in which case tangents are propagated exactly.
    """
    n = ad.value(x).shape[-1]
    if n != fmap.n:
        raise InvalidInputError(f"input dim {n} != feature map dim {fmap.n}")
    if not isinstance(x, ad.Dual) and not np.all(np.isfinite(ad.value(x))):
        raise InvalidInputError("non-finite input to featurize")
    z = (x / fmap.bandwidth) @ fmap.proj.T + fmap.phase
    return ad.sin(z)


def featurize_jacobian(fmap: FeatureMap, x) -> np.ndarray:
    """Analytic Jacobian d phi / d x at a single input, shape (m, n)."""
    x = np.asarray(x, dtype=float)
    scaled = fmap.proj / fmap.bandwidth
    z = scaled @ x + fmap.phase
    return np.cos(z)[:, None] * scaled


def mean_pairwise_distances(inputs: np.ndarray) -> np.ndarray:
    """Per-dimension mean over all unordered pairs of |x_i^a - x_i^b|.

    Computed exactly in O(N log N) per dimension via sorting: with sorted
    values the pairwise sum telescopes to sum_k x_(k) * (2k + 1 - N).
    """
    inputs = np.asarray(inputs, dtype=float)
    n_pts = inputs.shape[0]
    srt = np.sort(inputs, axis=0)
    coef = (2.0 * np.arange(n_pts) + 1.0 - n_pts)[:, None]
    total = np.sum(srt * coef, axis=0)
    return total / (n_pts * (n_pts - 1) / 2.0)


def fit_bandwidth(inputs, floor: float = 1e-3) -> np.ndarray:
    """Bandwidth heuristic: average pairwise distance per input dimension.

    Components that come out zero (degenerate data) are replaced by ``floor``.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] < 2:
        raise InsufficientDataError("need at least 2 input vectors")
    bw = mean_pairwise_distances(inputs)
    bw = np.where(bw <= 0.0, floor, bw)
    return bw


def log_evidence(phi: np.ndarray, targets: np.ndarray, alpha: float, beta: float) -> float:
    """Marginal log-likelihood of a Gaussian linear model on given features.

    Summed over output columns; the weight prior is N(0, alpha^-1 I).
    """
    phi = np.asarray(phi, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    n_pts, m = phi.shape
    d = targets.shape[1]
    a_mat = alpha * np.eye(m) + beta * phi.T @ phi
    chol = np.linalg.cholesky(a_mat)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    rhs = beta * phi.T @ targets
    mean = _cho_solve(chol, rhs)
    resid = targets - phi @ mean
    energy = 0.5 * beta * np.sum(resid ** 2) + 0.5 * alpha * np.sum(mean ** 2)
    return (d * (0.5 * m * math.log(alpha) + 0.5 * n_pts * math.log(beta)
                 - 0.5 * log_det - 0.5 * n_pts * math.log(2.0 * math.pi))
            - energy)


def _cho_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


def fit_bandwidth_evidence(inputs, targets, m: int, seed: int,
                           alpha: float = 1.0, beta: float = 1.0,
                           floor: float = 1e-3, span: float = 8.0,
                           points: int = 7) -> np.ndarray:
    """Coordinate-wise evidence maximization around the pairwise heuristic.

    For each input dimension, ``points`` log-spaced multipliers in
    [1/span, span] of the heuristic value are scored by the regression
    evidence; the best one is kept.  One sweep over dimensions.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    bw = fit_bandwidth(inputs, floor=floor)
    multipliers = np.logspace(-math.log10(span), math.log10(span), points)
    for dim in range(inputs.shape[1]):
        best_val, best_bw = -np.inf, bw[dim]
        for mult in multipliers:
            cand = bw.copy()
            cand[dim] = bw[dim] * mult
            fmap = sample_feature_map(inputs.shape[1], m, cand, seed)
            ev = log_evidence(featurize(fmap, inputs), targets, alpha, beta)
            if ev > best_val:
                best_val, best_bw = ev, cand[dim]
        bw[dim] = best_bw
    return bw
