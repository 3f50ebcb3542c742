"""Full-covariance Gaussian mixture fitting by EM, with k-means++ seeding.

Used for initialization only: the reference-scale sigma0 comes from the
average covariance eigenvalue of a K-component mixture fit, and k-means++
labels seed the pure states.  Deterministic given the seed.
"""

from __future__ import annotations

import numpy as np

from .model import gaussian_logpdf

EM_REG = 1e-6


def kmeans_pp(
    x: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ centers plus Lloyd refinement; returns (centers, labels)."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = x[rng.integers(n, size=k - j)]
            break
        probs = d2 / total
        centers[j] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers, labels


def fit_gmm_em(
    y: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """EM for a K-component full-covariance Gaussian mixture.

    Returns (means, covs, weights, loglik_trace).  The per-sample mean log
    likelihood is non-decreasing along the trace (standard EM guarantee);
    an emptied component is re-seeded once at the most poorly explained
    sample, then kept alive with a covariance ridge.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    n, d = y.shape
    rng = np.random.default_rng(seed)
    centers, labels = kmeans_pp(y, k, rng)
    means = centers.copy()
    covs = np.empty((k, d, d))
    weights = np.empty(k)
    base_cov = np.cov(y.T, ddof=0).reshape(d, d)
    ridge = EM_REG * max(np.trace(base_cov) / d, 1e-12) * np.eye(d)
    for j in range(k):
        members = y[labels == j]
        weights[j] = max(len(members), 1) / n
        if len(members) > d:
            diff = members - means[j]
            covs[j] = diff.T @ diff / len(members) + ridge
        else:
            covs[j] = base_cov + ridge
    weights = weights / weights.sum()

    trace = []
    reseeded = False
    for _ in range(max_iter):
        # E-step in log domain.
        log_comp = np.stack(
            [np.log(weights[j]) + gaussian_logpdf(y, means[j], covs[j]) for j in range(k)],
            axis=1,
        )
        top = log_comp.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(log_comp - top).sum(axis=1))
        ll = float(log_norm.mean())
        trace.append(ll)
        resp = np.exp(log_comp - log_norm[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-10):
            # One rescue: plant the dead component on the worst-fit sample.
            if not reseeded:
                reseeded = True
                for j in np.flatnonzero(nk < 1e-10):
                    worst = int(np.argmin(log_norm))
                    means[j] = y[worst]
                    covs[j] = base_cov + ridge
                    weights[j] = 1.0 / n
                weights = weights / weights.sum()
                continue
            nk = np.maximum(nk, 1e-10)
        # M-step.
        weights = nk / n
        means = (resp.T @ y) / nk[:, None]
        for j in range(k):
            diff = y - means[j]
            covs[j] = (resp[:, j][:, None] * diff).T @ diff / nk[j] + ridge
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break
    return means, covs, weights, np.asarray(trace)


def average_covariance_eigenvalue(covs: np.ndarray) -> float:
    """Mean eigenvalue across a stack of covariance matrices."""
    return float(np.mean(np.trace(covs, axis1=-2, axis2=-1) / covs.shape[-1]))
