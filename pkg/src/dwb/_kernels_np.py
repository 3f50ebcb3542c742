"""NumPy reference kernels for the batched SPD linear algebra hot path.

Everything here operates on stacked arrays (leading batch axes) of small
symmetric positive-definite matrices: eigendecompositions, matrix square
roots, the covariance-barycenter fixed-point map, and the squared Bures
distance, together with their hand-derived reverse-mode adjoints.

The compiled extension ``dwb._core`` exposes the same callables for small
dimensions; ``dwb._backend`` picks one of the two at import time.  Gradients
are the adjoints of the *unrolled* computation (a fixed number of fixed-point
sweeps), so finite differences of the forward pass match them to rounding.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

# Floors for eigenvalue clamping and for the divided-difference gap guard.
EIG_CLAMP = 1e-12
GAP_EPS = 1e-10


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetrize the trailing two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def eigh_batch(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of stacked symmetric matrices, ascending order."""
    return np.linalg.eigh(a)


def _recompose(u: np.ndarray, flam: np.ndarray) -> np.ndarray:
    """U diag(f) U^T over the batch."""
    return np.einsum("...ij,...j,...kj->...ik", u, flam, u)


def _clamped(lam: np.ndarray) -> np.ndarray:
    return np.maximum(lam, EIG_CLAMP)


def spd_sqrt(a: np.ndarray) -> np.ndarray:
    """Principal square root of stacked SPD matrices (eigenvalues clamped)."""
    lam, u = eigh_batch(a)
    return _recompose(u, np.sqrt(_clamped(lam)))


def spd_sqrt_and_inv(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (A^1/2, A^-1/2) from a single eigendecomposition."""
    lam, u = eigh_batch(a)
    s = np.sqrt(_clamped(lam))
    return _recompose(u, s), _recompose(u, 1.0 / s)


def _dk_scale(lam: np.ndarray, f, fprime) -> np.ndarray:
    """Divided-difference (Loewner) matrix of f on eigenvalue pairs.

    Entry (i, j) is (f(li) - f(lj)) / (li - lj), with the derivative midpoint
    substituted where the gap is below GAP_EPS relative to the local scale,
    which keeps the adjoint finite at (near-)repeated eigenvalues.
    """
    li = lam[..., :, None]
    lj = lam[..., None, :]
    den = li - lj
    scale = np.maximum(1.0, np.maximum(np.abs(li), np.abs(lj)))
    small = np.abs(den) < GAP_EPS * scale
    safe_den = np.where(small, 1.0, den)
    dd = (f(li) - f(lj)) / safe_den
    mid = 0.5 * (fprime(li) + fprime(lj))
    return np.where(small, mid, dd)


def _fn_adjoint(lam: np.ndarray, u: np.ndarray, f, fprime, xbar: np.ndarray) -> np.ndarray:
    """Adjoint of A -> f(A) (spectral function) applied to the seed xbar.

    The Loewner scaling is symmetric in (i, j), so the Frechet derivative is
    self-adjoint and the reverse rule reuses the same coefficient matrix.
    """
    k = _dk_scale(lam, f, fprime)
    inner = np.einsum("...ji,...jk,...kl->...il", u, sym(xbar), u)
    return np.einsum("...ij,...jk,...lk->...il", u, k * inner, u)


def _sqrt_f(x):
    return np.sqrt(np.maximum(x, EIG_CLAMP))


def _sqrt_fprime(x):
    return 0.5 / np.sqrt(np.maximum(x, EIG_CLAMP))


def _invsqrt_f(x):
    return 1.0 / np.sqrt(np.maximum(x, EIG_CLAMP))


def _invsqrt_fprime(x):
    xc = np.maximum(x, EIG_CLAMP)
    return -0.5 * xc ** (-1.5)


def lyapunov_from_eigh(lam: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve L S + S L = V given the eigendecomposition of SPD S."""
    li = _clamped(lam)
    denom = li[..., :, None] + li[..., None, :]
    inner = np.einsum("...ji,...jk,...kl->...il", u, v, u)
    return np.einsum("...ij,...jk,...lk->...il", u, inner / denom, u)


# ---------------------------------------------------------------------------
# Covariance barycenter fixed point
# ---------------------------------------------------------------------------


def barycenter_cov_fixpoint(
    weights: np.ndarray,
    covs: np.ndarray,
    iters: int,
    want_stash: bool = False,
    want_residual: bool = False,
):
    """Run the barycenter fixed-point map on a batch of weight vectors.

    Parameters
    ----------
    weights : (B, K) nonnegative rows.
    covs : (K, d, d) SPD component covariances, shared across the batch.
    iters : number of fixed-point sweeps (unrolled; no early exit).
    want_stash : keep per-sweep intermediates for the reverse pass.
    want_residual : additionally report ||map(S) - S||_F per batch row.

    Returns
    -------
    (S, residual, stash) with S of shape (B, d, d); residual is None unless
    requested; stash is None unless requested.

    The iterate is started at the weighted linear mix of the components, so a
    vertex weight vector reproduces its component exactly at every sweep.
    """
    weights = np.asarray(weights, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    s = np.einsum("bk,kij->bij", weights, covs)
    stash = [] if want_stash else None
    for _ in range(iters):
        s, rec = _fixpoint_sweep(weights, covs, s, want_stash)
        if want_stash:
            stash.append(rec)
    residual = None
    if want_residual:
        s_next, _ = _fixpoint_sweep(weights, covs, s, False)
        residual = np.linalg.norm(s_next - s, axis=(-2, -1))
    return s, residual, stash


def _fixpoint_sweep(weights, covs, s, want_stash):
    """One application of S -> S^-1/2 (sum_k w_k (S^1/2 C_k S^1/2)^1/2)^2 S^-1/2."""
    lam_s, u_s = eigh_batch(s)
    root = np.sqrt(_clamped(lam_s))
    r = _recompose(u_s, root)
    rinv = _recompose(u_s, 1.0 / root)
    # N[b, k] = R_b C_k R_b
    n = np.einsum("bij,kjl,blm->bkim", r, covs, r)
    lam_n, u_n = eigh_batch(n)
    m = _recompose(u_n, np.sqrt(_clamped(lam_n)))
    p = np.einsum("bk,bkij->bij", weights, m)
    s_next = sym(np.einsum("bij,bjk,bkl,blm->bim", rinv, p, p, rinv))
    rec = None
    if want_stash:
        rec = (lam_s, u_s, r, rinv, lam_n, u_n, m, p)
    return s_next, rec


def barycenter_cov_backward(
    weights: np.ndarray,
    covs: np.ndarray,
    stash: list,
    sbar: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of barycenter_cov_fixpoint with respect to weights and covs.

    Parameters
    ----------
    weights, covs : the forward inputs.
    stash : intermediates returned by the forward pass.
    sbar : (B, d, d) adjoint seed for the final iterate.

    Returns
    -------
    (weights_bar, covs_bar) of shapes (B, K) and (K, d, d); the covariance
    adjoint is accumulated over the batch.
    """
    weights = np.asarray(weights, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    b, k = weights.shape
    wbar = np.zeros_like(weights)
    cbar = np.zeros_like(covs)
    a = sym(np.asarray(sbar, dtype=np.float64))
    for lam_s, u_s, r, rinv, lam_n, u_n, m, p in reversed(stash):
        # S' = Rinv P P Rinv
        w_mid = np.einsum("bij,bjk,bkl->bil", rinv, a, rinv)
        pbar = np.einsum("bij,bjk->bik", w_mid, p) + np.einsum("bij,bjk->bik", p, w_mid)
        pp = np.einsum("bij,bjk->bik", p, p)
        rinvbar = sym(
            np.einsum("bij,bjk,bkl->bil", a, rinv, pp)
            + np.einsum("bij,bjk,bkl->bil", pp, rinv, a)
        )
        # P = sum_k w_k M_k
        wbar += np.einsum("bkij,bij->bk", m, pbar)
        mbar = weights[:, :, None, None] * pbar[:, None, :, :]
        # M_k = N_k^1/2
        nbar = _fn_adjoint(lam_n, u_n, _sqrt_f, _sqrt_fprime, mbar)
        # N_k = R C_k R
        cbar += np.einsum("bij,bkjl,blm->kim", r, nbar, r)
        rbar = sym(
            np.einsum("bkij,bjq,kql->bil", nbar, r, covs)
            + np.einsum("kij,bjq,bkql->bil", covs, r, nbar)
        )
        # R = S^1/2, Rinv = S^-1/2 share the eigendecomposition of S
        a = _fn_adjoint(lam_s, u_s, _sqrt_f, _sqrt_fprime, rbar) + _fn_adjoint(
            lam_s, u_s, _invsqrt_f, _invsqrt_fprime, rinvbar
        )
    # S_0 = sum_k w_k C_k
    cbar += np.einsum("bk,bij->kij", weights, a)
    wbar += np.einsum("kij,bij->bk", covs, a)
    return wbar, cbar


# ---------------------------------------------------------------------------
# Squared Bures distance against fixed references
# ---------------------------------------------------------------------------


def bures_sq_fixed(
    ref_sqrt: np.ndarray,
    ref_trace: np.ndarray,
    s: np.ndarray,
    want_stash: bool = False,
):
    """Squared Bures distance B^2(ref, S) for stacked pairs.

    ``ref_sqrt`` is the precomputed square root of the reference covariance
    and ``ref_trace`` its trace; both broadcast against the batch of ``s``.
    Returns (values, stash) where the stash feeds the reverse pass.
    """
    x = sym(np.einsum("...ij,...jk,...kl->...il", ref_sqrt, s, ref_sqrt))
    lam_x, u_x = eigh_batch(x)
    cross = np.sum(np.sqrt(_clamped(lam_x)), axis=-1)
    tr_s = np.trace(s, axis1=-2, axis2=-1)
    vals = ref_trace + tr_s - 2.0 * cross
    stash = (lam_x, u_x) if want_stash else None
    return vals, stash


def bures_sq_fixed_backward(
    ref_sqrt: np.ndarray,
    stash: tuple,
    seed: np.ndarray,
) -> np.ndarray:
    """Adjoint of bures_sq_fixed with respect to S.

    d B^2 / dS = I - A X^-1/2 A with A the reference square root and
    X = A S A; ``seed`` scales each batch entry.
    """
    lam_x, u_x = stash
    xinv_half = _recompose(u_x, 1.0 / np.sqrt(_clamped(lam_x)))
    d = ref_sqrt.shape[-1]
    eye = np.eye(d)
    grad = eye - np.einsum("...ij,...jk,...kl->...il", ref_sqrt, xinv_half, ref_sqrt)
    return seed[..., None, None] * grad
