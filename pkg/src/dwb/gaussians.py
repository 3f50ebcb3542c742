"""Closed-form Wasserstein-2 geometry of Gaussian distributions.

Squared W2 between Gaussians splits into a squared Euclidean distance
between means plus the squared Bures distance between covariances, and the
barycenter of Gaussians under simplex weights is again Gaussian: its mean
is the weighted mean and its covariance solves a fixed-point equation.
These closed forms are the geometric vocabulary of the whole package.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._kernels_np import EIG_CLAMP, spd_sqrt, sym
from .errors import DimensionMismatchError, NotSPDError

SYM_RTOL = 1e-12
WEIGHT_DROP = 1e-12
RESIDUAL_WARN = 1e-4


@dataclass(frozen=True)
class GaussianParams:
    """A Gaussian distribution as (mean, covariance).

    The covariance must be symmetric to 1e-12 relative tolerance and
    positive-definite; construction rejects anything else.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"mean of length {mean.size} needs a {mean.size}x{mean.size} covariance, "
                f"got {cov.shape}"
            )
        scale = max(1.0, float(np.abs(cov).max()))
        if np.abs(cov - cov.T).max() > SYM_RTOL * scale:
            raise NotSPDError("covariance is not symmetric")
        eigmin = float(np.linalg.eigvalsh(cov)[0])
        if eigmin <= 0.0:
            raise NotSPDError(f"covariance is not positive-definite (min eigenvalue {eigmin:g})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", sym(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SimplexWeights:
    """A point on the probability simplex."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise DimensionMismatchError("weights must be a vector")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return self.w.size


def _as_weights(weights) -> np.ndarray:
    if isinstance(weights, SimplexWeights):
        return weights.w
    return SimplexWeights(np.asarray(weights, dtype=np.float64)).w


def bures_sq(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Bures distance between SPD matrices.

    tr(a) + tr(b) - 2 tr((a^1/2 b a^1/2)^1/2).  Symmetric in its arguments
    and zero exactly when they coincide.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    root = spd_sqrt(a)
    vals, _ = _backend.bures_sq_fixed(root, np.trace(a), b[None])
    val = float(vals[0])
    if not np.isfinite(val):
        raise NotSPDError("Bures distance hit a non-SPD intermediate")
    return max(val, 0.0)


def w2_gaussian(a: GaussianParams, b: GaussianParams) -> float:
    """Squared Wasserstein-2 distance between two Gaussians.

    Decomposes exactly as ||mean difference||^2 + bures_sq(cov_a, cov_b).
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")
    mean_part = float(np.sum((a.mean - b.mean) ** 2))
    return mean_part + bures_sq(a.cov, b.cov)


def barycenter_mean(weights, means) -> np.ndarray:
    """Weighted mean of the component means (the barycenter's mean)."""
    w = _as_weights(weights)
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] != w.size:
        raise DimensionMismatchError(
            f"{w.size} weights need a matching list of means, got shape {means.shape}"
        )
    return means.T @ w


def barycenter_cov(weights, covs, iters: int = 10) -> tuple[np.ndarray, float]:
    """Barycenter covariance via the fixed-point map, plus its residual.

    Runs ``iters`` sweeps of

        S <- S^-1/2 (sum_k w_k (S^1/2 C_k S^1/2)^1/2)^2 S^-1/2

    from the weighted linear mix of the components.  Returns the final
    iterate and the Frobenius norm of one further sweep minus the iterate,
    so callers can detect slow convergence; a residual above 1e-4 is worth
    a warning but is not an error (the sweep count is fixed by design).

    Weights below 1e-12 are dropped and the rest renormalized before
    iterating, which keeps near-vertex weight vectors well conditioned.
    """
    w = _as_weights(weights)
    covs = np.asarray(covs, dtype=np.float64)
    if covs.ndim != 3 or covs.shape[0] != w.size:
        raise DimensionMismatchError(
            f"{w.size} weights need a stack of covariances, got shape {covs.shape}"
        )
    keep = w > WEIGHT_DROP
    if not np.all(keep):
        w = w[keep] / w[keep].sum()
        covs = covs[keep]
    s, residual, _ = _backend.barycenter_cov_fixpoint(
        w[None, :], covs, iters, want_residual=True
    )
    resid = float(residual[0])
    if resid > RESIDUAL_WARN:
        warnings.warn(
            f"barycenter fixed point still moving after {iters} sweeps "
            f"(residual {resid:.3g}); consider more iterations",
            RuntimeWarning,
            stacklevel=2,
        )
    return s[0], resid


def barycenter(weights, components, iters: int = 10) -> GaussianParams:
    """Wasserstein barycenter of Gaussian components under simplex weights."""
    comps = list(components)
    w = _as_weights(weights)
    if len(comps) != w.size:
        raise DimensionMismatchError(f"{w.size} weights for {len(comps)} components")
    dims = {c.dim for c in comps}
    if len(dims) != 1:
        raise DimensionMismatchError(f"components disagree on dimension: {sorted(dims)}")
    means = np.stack([c.mean for c in comps])
    covs = np.stack([c.cov for c in comps])
    mean = barycenter_mean(SimplexWeights(w), means)
    cov, _ = barycenter_cov(SimplexWeights(w), covs, iters=iters)
    # Guard against rounding pushing a tiny eigenvalue nonpositive.
    eigmin = float(np.linalg.eigvalsh(cov)[0])
    if eigmin <= 0.0:
        cov = cov + (EIG_CLAMP - eigmin) * np.eye(cov.shape[0])
    return GaussianParams(mean, cov)
