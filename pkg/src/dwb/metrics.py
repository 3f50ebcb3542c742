"""Fit-quality metrics: average squared-W2 error and negative log likelihood.

Barycentric emissions are Gaussians, so their per-window error is closed
form.  Mixture emissions have no closed form against a Gaussian window; for
those the squared W2 is estimated by Monte Carlo with the exact discrete OT
solver, matching how the models are compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import _backend
from ._kernels_np import EIG_CLAMP
from .discrete import ot_discrete
from .errors import DimensionMismatchError
from .gaussians import w2_gaussian
from .model import MixtureEmission, PureStates, WindowConfig, gaussian_logpdf

MC_SAMPLES_DEFAULT = 5000


@dataclass(frozen=True)
class MetricReport:
    """Metric values plus the traces and sampling metadata behind them."""

    e_w: float
    e_nll: float
    per_window_w2: np.ndarray
    mc_samples: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.e_w < 0:
            raise ValueError("e_w must be nonnegative")


def eval_e_w(data, barycenter_means: np.ndarray, barycenter_covs: np.ndarray):
    """Average squared W2 between the windows and Gaussian emissions.

    Returns (e_w, per_window values).
    """
    if len(data) != barycenter_means.shape[0]:
        raise DimensionMismatchError(
            f"{len(data)} windows vs {barycenter_means.shape[0]} emissions"
        )
    vals, _ = _backend.bures_sq_fixed(data._sqrt_covs, data._traces, barycenter_covs)
    vals = vals + np.sum((data.means - barycenter_means) ** 2, axis=1)
    return float(vals.mean()), vals


def eval_e_w_mixture(
    data,
    trajectory: np.ndarray,
    theta: PureStates,
    mc_samples: int = MC_SAMPLES_DEFAULT,
    seed: int = 0,
):
    """Monte-Carlo average squared W2 against mixture emissions.

    Per window: draw mc_samples points from the window Gaussian and from the
    mixture, then solve the empirical transport problem exactly.
    """
    if len(data) != trajectory.shape[0]:
        raise DimensionMismatchError(
            f"{len(data)} windows vs {trajectory.shape[0]} states"
        )
    rng = np.random.default_rng(seed)
    vals = np.empty(len(data))
    for t in range(len(data)):
        mix = MixtureEmission(weights=trajectory[t], states=theta)
        xs = rng.multivariate_normal(data.means[t], data.covs[t], size=mc_samples)
        ys = mix.sample(mc_samples, rng)
        vals[t] = ot_discrete(xs, ys).cost
    return float(vals.mean()), vals


def _window_blocks(y: np.ndarray, cfg: WindowConfig, t_len: int):
    length = cfg.length
    for t in range(t_len):
        yield y[t * cfg.delta : t * cfg.delta + length]


def eval_e_nll_gaussian(
    y: np.ndarray, cfg: WindowConfig, means: np.ndarray, covs: np.ndarray
):
    """Per-sample negative log likelihood under Gaussian emissions.

    Windows with numerically singular emission covariances are evaluated
    with a small ridge and reported in the returned flag list.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    t_len = means.shape[0]
    total = 0.0
    count = 0
    flagged = []
    for t, block in enumerate(_window_blocks(y, cfg, t_len)):
        cov = covs[t]
        eigmin = float(np.linalg.eigvalsh(cov)[0])
        if eigmin < EIG_CLAMP:
            cov = cov + (EIG_CLAMP - eigmin + 1e-12) * np.eye(cov.shape[0])
            flagged.append(t)
        total += float(gaussian_logpdf(block, means[t], cov).sum())
        count += block.shape[0]
    return -total / count, flagged


def eval_e_nll_mixture(
    y: np.ndarray, cfg: WindowConfig, trajectory: np.ndarray, theta: PureStates
):
    """Per-sample negative log likelihood under mixture emissions."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    t_len = trajectory.shape[0]
    total = 0.0
    count = 0
    for t, block in enumerate(_window_blocks(y, cfg, t_len)):
        mix = MixtureEmission(weights=trajectory[t], states=theta)
        total += float(mix.logpdf(block).sum())
        count += block.shape[0]
    return -total / count, []


def best_state_permutation(theta_hat: PureStates, theta_true: PureStates) -> tuple[int, ...]:
    """Relabeling of the fitted states minimizing the total squared W2 to truth."""
    k = theta_true.n_states
    if theta_hat.n_states != k:
        raise DimensionMismatchError("state counts differ")
    cost = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            cost[i, j] = w2_gaussian(theta_hat.state(i), theta_true.state(j))
    best, best_perm = np.inf, None
    for perm in permutations(range(k)):
        total = sum(cost[perm[j], j] for j in range(k))
        if total < best:
            best, best_perm = total, perm
    return best_perm


def theta_w2_errors(
    theta_hat: PureStates, theta_true: PureStates, perm: tuple[int, ...] | None = None
) -> np.ndarray:
    """Per-state squared W2 between relabeled fitted states and the truth."""
    if perm is None:
        perm = best_state_permutation(theta_hat, theta_true)
    return np.array(
        [
            w2_gaussian(theta_hat.state(perm[j]), theta_true.state(j))
            for j in range(theta_true.n_states)
        ]
    )


def state_mae(
    traj_hat: np.ndarray, traj_true: np.ndarray, perm: tuple[int, ...] | None = None
) -> float:
    """Mean absolute state error under a relabeling (identity if perm is None)."""
    if traj_hat.shape != traj_true.shape:
        raise DimensionMismatchError(
            f"trajectory shapes differ: {traj_hat.shape} vs {traj_true.shape}"
        )
    if perm is not None:
        traj_hat = traj_hat[:, list(perm)]
    return float(np.abs(traj_hat - traj_true).mean())
