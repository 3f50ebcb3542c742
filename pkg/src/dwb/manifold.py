"""Riemannian geometry for Gaussian parameters: R^d x SPD(d).

Means carry plain Euclidean geometry.  Covariances carry the
Bures-Wasserstein structure, whose squared geodesic distance is the squared
Bures distance.  The metric convention is pinned by calibration against
that distance:

    bures_sq(S, bw_exp(S, t V)) = t^2 * bw_metric(S, V, V)   for admissible t,

which makes every downstream formula convention-independent and testable.
Under this calibration the metric is g_S(U, V) = tr(L_S(U) V) / 2 with
L_S the Lyapunov solve, the exponential map is S + V + L S L, and the
Riemannian gradient of f is 2 (G S + S G) for Euclidean gradient G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels_np import sym
from .errors import DimensionMismatchError, NotSPDError, StepTooLargeError
from .gaussians import GaussianParams

SPD_FLOOR = 1e-10
SYM_TOL = 1e-12


@dataclass(frozen=True)
class ProductTangent:
    """A tangent vector: a mean direction plus a symmetric covariance direction."""

    mean_dir: np.ndarray
    cov_dir: np.ndarray

    def __post_init__(self):
        mean_dir = np.asarray(self.mean_dir, dtype=np.float64)
        cov_dir = np.asarray(self.cov_dir, dtype=np.float64)
        d = mean_dir.size
        if cov_dir.shape != (d, d):
            raise DimensionMismatchError(
                f"cov_dir shape {cov_dir.shape} does not match mean dimension {d}"
            )
        scale = max(1.0, float(np.abs(cov_dir).max()))
        if np.abs(cov_dir - cov_dir.T).max() > SYM_TOL * scale:
            raise NotSPDError("cov_dir must be symmetric")
        object.__setattr__(self, "mean_dir", mean_dir)
        object.__setattr__(self, "cov_dir", sym(cov_dir))


def _check_sym(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    scale = max(1.0, float(np.abs(v).max()))
    if np.abs(v - v.T).max() > 1e-10 * scale:
        raise NotSPDError(f"{name} must be symmetric")
    return sym(v)


def lyapunov_solve(s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve L S + S L = V for symmetric L, in the eigenbasis of SPD S."""
    s = np.asarray(s, dtype=np.float64)
    v = _check_sym(v, "V")
    lam, u = np.linalg.eigh(s)
    if lam[0] <= 0:
        raise NotSPDError(f"S is not positive-definite (min eigenvalue {lam[0]:g})")
    inner = u.T @ v @ u
    denom = lam[:, None] + lam[None, :]
    return sym(u @ (inner / denom) @ u.T)


def bw_exp(s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exponential map on the SPD cone: exp_S(V) = S + V + L S L.

    Raises StepTooLargeError when the candidate leaves the SPD cone (an
    eigenvalue below 1e-10); callers are expected to contract the step.
    """
    s = np.asarray(s, dtype=np.float64)
    v = _check_sym(v, "V")
    ell = lyapunov_solve(s, v)
    out = sym(s + v + ell @ s @ ell)
    eigmin = float(np.linalg.eigvalsh(out)[0])
    if eigmin < SPD_FLOOR:
        raise StepTooLargeError(
            f"exponential-map result has eigenvalue {eigmin:g}; contract the step"
        )
    return out


def bw_metric(s: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Riemannian inner product at S, calibrated against the Bures distance."""
    u = _check_sym(u, "U")
    v = _check_sym(v, "V")
    return 0.5 * float(np.sum(lyapunov_solve(s, u) * v))


def riemannian_grad(s: np.ndarray, euclid_grad: np.ndarray) -> np.ndarray:
    """Convert a symmetrized Euclidean gradient to the Riemannian gradient.

    The result G is defined by bw_metric(S, G, V) = <euclid_grad, V> for all
    symmetric V, which with this metric convention is 2 (G_e S + S G_e).
    """
    s = np.asarray(s, dtype=np.float64)
    g = _check_sym(euclid_grad, "euclid_grad")
    return sym(2.0 * (g @ s + s @ g))


def product_step(p: GaussianParams, t: ProductTangent, step: float) -> GaussianParams:
    """Move a Gaussian along a product tangent: Euclidean mean, bw_exp covariance."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if t.mean_dir.size != p.dim:
        raise DimensionMismatchError(f"tangent dimension {t.mean_dir.size} != point {p.dim}")
    if step == 0.0:
        return p
    mean = p.mean + step * t.mean_dir
    cov = bw_exp(p.cov, step * t.cov_dir)
    return GaussianParams(mean, cov)
