"""The time-series model: windowed data, emissions, priors, and the objective.

A multivariate series is summarized by sliding-window empirical Gaussians.
Each window is scored against an emission distribution built from the K
pure states and the window's simplex state: either their Wasserstein
barycenter (displacement interpolation) or their linear mixture (the GMM
baseline).  The full objective is

    F = -log p(innovations | H) - log p(pure states) + lam * sum_t W2^2(window_t, emission_t)

with gradients for every learnable block computed by hand-derived reverse
passes through the unrolled barycenter fixed point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from . import _backend
from ._kernels_np import EIG_CLAMP, spd_sqrt, sym
from .errors import DimensionMismatchError, ObjectiveNumericsError
from .gaussians import GaussianParams, SimplexWeights, barycenter
from .simplexwalk import (
    BetaMixtureHyper,
    InnovationSequence,
    log_prior_innovations,
    log_prior_innovations_single,
    unroll,
    unroll_backward,
)

WINDOW_REG = 1e-8
RANK_DEFICIENT_REL = 1e-12


class Interpolation(str, enum.Enum):
    """How pure states combine into a window's emission distribution."""

    WASSERSTEIN_BARYCENTER = "wasserstein_barycenter"
    GMM_LINEAR = "gmm_linear"


class InnovationPrior(str, enum.Enum):
    BETA_MIXTURE = "beta_mixture"
    BETA_SINGLE = "beta_single"


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window geometry: half-width n and stride delta, in samples."""

    n: int
    delta: int

    def __post_init__(self):
        if self.n < 1 or self.delta < 1:
            raise ValueError(f"n and delta must be >= 1, got n={self.n}, delta={self.delta}")

    @property
    def length(self) -> int:
        return 2 * self.n + 1

    def n_windows(self, source_length: int) -> int:
        if source_length < self.length:
            raise ValueError(
                f"insufficient samples: series of length {source_length} is shorter "
                f"than one window ({self.length})"
            )
        return (source_length - self.length) // self.delta + 1


@dataclass(frozen=True)
class EmpiricalSequence:
    """Windowed empirical Gaussians with their window geometry.

    ``means`` is (T, d) and ``covs`` is (T, d, d); ``flagged`` lists windows
    whose covariance was rank-deficient and received a ridge.
    """

    means: np.ndarray
    covs: np.ndarray
    config: WindowConfig
    source_length: int
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        covs = np.asarray(self.covs, dtype=np.float64)
        if means.ndim != 2 or covs.shape != (means.shape[0], means.shape[1], means.shape[1]):
            raise DimensionMismatchError(
                f"means {means.shape} and covs {covs.shape} are inconsistent"
            )
        expect = self.config.n_windows(self.source_length)
        if means.shape[0] != expect:
            raise ValueError(
                f"window count {means.shape[0]} does not match the configuration "
                f"(expected {expect})"
            )
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def windows(self) -> list[GaussianParams]:
        return [GaussianParams(m, c) for m, c in zip(self.means, self.covs)]

    @cached_property
    def _sqrt_covs(self) -> np.ndarray:
        return spd_sqrt(self.covs)

    @cached_property
    def _traces(self) -> np.ndarray:
        return np.trace(self.covs, axis1=-2, axis2=-1)


@dataclass(frozen=True)
class PureStates:
    """The K pure-state Gaussians (stacked means and covariances)."""

    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        covs = np.asarray(self.covs, dtype=np.float64)
        if means.ndim != 2 or covs.shape != (means.shape[0], means.shape[1], means.shape[1]):
            raise DimensionMismatchError(
                f"means {means.shape} and covs {covs.shape} are inconsistent"
            )
        eigs = np.linalg.eigvalsh(covs)
        if np.any(eigs[:, 0] <= 0):
            raise ValueError("every pure-state covariance must be positive-definite")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", sym(covs))

    @classmethod
    def from_gaussians(cls, states: list[GaussianParams]) -> "PureStates":
        return cls(
            means=np.stack([s.mean for s in states]),
            covs=np.stack([s.cov for s in states]),
        )

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def state(self, k: int) -> GaussianParams:
        return GaussianParams(self.means[k], self.covs[k])


@dataclass(frozen=True)
class ThetaPriorConfig:
    """Reference distribution N(m0, sigma0^2 I), spread s, and the T scaling."""

    m0: np.ndarray
    sigma0: float
    s: float = 1.0
    t_scale: int = 1

    def __post_init__(self):
        if self.sigma0 <= 0 or self.s <= 0:
            raise ValueError("sigma0 and s must be positive")
        object.__setattr__(self, "m0", np.asarray(self.m0, dtype=np.float64))


@dataclass(frozen=True)
class ObjectiveConfig:
    """Data-fit weight, interpolation mode, and innovation-prior variant."""

    lam: float = 100.0
    interpolation: Interpolation = Interpolation.WASSERSTEIN_BARYCENTER
    fixpoint_iters: int = 10
    innovation_prior: InnovationPrior = InnovationPrior.BETA_MIXTURE
    single_a: float = 1.1
    single_b: float = 3.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "interpolation", Interpolation(self.interpolation))
        object.__setattr__(self, "innovation_prior", InnovationPrior(self.innovation_prior))


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------


def window_series(y: np.ndarray, cfg: WindowConfig) -> EmpiricalSequence:
    """Slide windows over the series and form unbiased empirical Gaussians.

    Window t covers samples t*delta .. t*delta + 2n (0-based); the mean uses
    divisor 2n+1 and the covariance divisor 2n.  Windows whose covariance is
    rank-deficient get a ridge of 1e-8 (trace/d) and are flagged rather than
    rejected.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise DimensionMismatchError("series must be (T, d)")
    t_total, d = y.shape
    t_windows = cfg.n_windows(t_total)
    length = cfg.length
    means = np.empty((t_windows, d))
    covs = np.empty((t_windows, d, d))
    flagged = []
    for t in range(t_windows):
        block = y[t * cfg.delta : t * cfg.delta + length]
        mu = block.mean(axis=0)
        centered = block - mu
        cov = (centered.T @ centered) / (length - 1)
        scale = max(np.trace(cov) / d, EIG_CLAMP)
        if np.linalg.eigvalsh(cov)[0] <= RANK_DEFICIENT_REL * scale:
            cov = cov + WINDOW_REG * scale * np.eye(d)
            flagged.append(t)
        means[t] = mu
        covs[t] = sym(cov)
    return EmpiricalSequence(
        means=means,
        covs=covs,
        config=cfg,
        source_length=t_total,
        flagged=tuple(flagged),
    )


# ---------------------------------------------------------------------------
# Emissions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureEmission:
    """A Gaussian-mixture emission (the linear-interpolation baseline)."""

    weights: np.ndarray
    states: PureStates

    def logpdf(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        comps = np.stack(
            [gaussian_logpdf(y, self.states.means[k], self.states.covs[k])
             for k in range(self.states.n_states)],
            axis=1,
        )
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)[None, :]
        shifted = comps + logw
        top = shifted.max(axis=1, keepdims=True)
        return top[:, 0] + np.log(np.exp(shifted - top).sum(axis=1))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        counts = rng.multinomial(n, self.weights)
        parts = [
            rng.multivariate_normal(self.states.means[k], self.states.covs[k], size=c)
            for k, c in enumerate(counts)
            if c > 0
        ]
        out = np.concatenate(parts, axis=0)
        return out[rng.permutation(n)]


def gaussian_logpdf(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of N(mean, cov) at rows of y, via Cholesky."""
    y = np.atleast_2d(y)
    d = mean.size
    chol = np.linalg.cholesky(cov)
    diff = (y - mean[None, :]).T
    sol = solve_triangular(chol, diff, lower=True)
    quad = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + quad)


def emission(x, theta: PureStates, mode: Interpolation | str):
    """Emission distribution at state x: barycenter Gaussian or mixture handle."""
    mode = Interpolation(mode)
    w = x.w if isinstance(x, SimplexWeights) else SimplexWeights(np.asarray(x)).w
    if w.size != theta.n_states:
        raise DimensionMismatchError(f"{w.size} weights for {theta.n_states} states")
    if mode is Interpolation.WASSERSTEIN_BARYCENTER:
        return barycenter(SimplexWeights(w), [theta.state(k) for k in range(theta.n_states)])
    return MixtureEmission(weights=w, states=theta)


def fit_distance(rho_hat: GaussianParams, x, theta: PureStates, mode: Interpolation | str) -> float:
    """Squared-W2 data-fit term for one window.

    Barycenter mode scores the window against the barycenter Gaussian.
    GMM mode uses the coupling-forced upper bound sum_k x_k W2^2(window, state_k),
    which is what the training objective optimizes (evaluation uses Monte
    Carlo instead; see dwb.metrics).
    """
    mode = Interpolation(mode)
    w = x.w if isinstance(x, SimplexWeights) else SimplexWeights(np.asarray(x)).w
    data = _SingleWindow(rho_hat)
    vals, _, _ = _data_term_forward(w[None, :], theta, data, mode, 10)
    return float(vals[0])


class _SingleWindow:
    """Adapter presenting one Gaussian as a length-1 empirical sequence."""

    def __init__(self, g: GaussianParams):
        self.means = g.mean[None, :]
        self.covs = g.cov[None, :, :]
        self._sqrt_covs = spd_sqrt(self.covs)
        self._traces = np.trace(self.covs, axis1=-2, axis2=-1)

    def __len__(self):
        return 1


# ---------------------------------------------------------------------------
# Pure-state prior
# ---------------------------------------------------------------------------


def theta_prior_log_kappa(d: int, s: float, sigma0: float) -> float:
    """Log normalizer per state: kappa = ((2 pi s^2) Phi(sigma0 / s))^-d."""
    return -d * (np.log(2.0 * np.pi * s * s) + np.log(ndtr(sigma0 / s)))


def log_prior_theta(theta: PureStates, cfg: ThetaPriorConfig, want_grads: bool = False):
    """Log prior of the pure states under the W2 pull toward the reference.

    T-scaled so the term grows like the data term:
    t_scale * sum_k [log kappa - W2^2((m_k, S_k), (m0, sigma0^2 I)) / (2 s^2)].
    """
    d = theta.dim
    if cfg.m0.size != d:
        raise DimensionMismatchError(f"reference mean has dimension {cfg.m0.size}, states {d}")
    lam_k, u_k = np.linalg.eigh(theta.covs)
    lam_c = np.maximum(lam_k, EIG_CLAMP)
    roots = np.sqrt(lam_c)
    mean_part = np.sum((theta.means - cfg.m0[None, :]) ** 2, axis=1)
    # B^2(S, sigma0^2 I) = sum_i (sqrt(lam_i) - sigma0)^2 in the eigenbasis.
    bures_part = np.sum((roots - cfg.sigma0) ** 2, axis=1)
    w2 = mean_part + bures_part
    log_kappa = theta_prior_log_kappa(d, cfg.s, cfg.sigma0)
    value = cfg.t_scale * float(theta.n_states * log_kappa - w2.sum() / (2.0 * cfg.s * cfg.s))
    if not want_grads:
        return value
    coef = -cfg.t_scale / (cfg.s * cfg.s)
    gmeans = coef * (theta.means - cfg.m0[None, :])
    inv_roots = np.einsum("kij,kj,klj->kil", u_k, 1.0 / roots, u_k)
    eye = np.eye(d)[None, :, :]
    gcovs = 0.5 * coef * (eye - cfg.sigma0 * inv_roots)
    return value, gmeans, gcovs


# ---------------------------------------------------------------------------
# Objective and gradients
# ---------------------------------------------------------------------------


def _data_term_forward(x, theta, data, mode, iters, want_grads=False):
    """Per-window squared-W2 fit values, with optional reverse-pass context."""
    means_k, covs_k = theta.means, theta.covs
    r = data.means - x @ means_k
    mean_vals = np.sum(r * r, axis=1)
    if mode is Interpolation.WASSERSTEIN_BARYCENTER:
        s_b, _, stash = _backend.barycenter_cov_fixpoint(
            x, covs_k, iters, want_stash=want_grads
        )
        bures_vals, bstash = _backend.bures_sq_fixed(
            data._sqrt_covs, data._traces, s_b, want_stash=want_grads
        )
        ctx = (r, stash, bstash) if want_grads else None
        return mean_vals + bures_vals, ctx, None
    # GMM upper bound: sum_k x_k W2^2(window_t, state_k).
    t_len, k = x.shape
    d = means_k.shape[1]
    ref = np.broadcast_to(data._sqrt_covs[:, None], (t_len, k, d, d)).reshape(-1, d, d)
    ss = np.broadcast_to(covs_k[None, :], (t_len, k, d, d)).reshape(-1, d, d)
    traces = np.repeat(data._traces, k)
    bures_pairs, bstash = _backend.bures_sq_fixed(ref, traces, ss, want_stash=want_grads)
    mean_pairs = ((data.means[:, None, :] - means_k[None, :, :]) ** 2).sum(axis=2)
    w2_pairs = mean_pairs + bures_pairs.reshape(t_len, k)
    vals = np.sum(x * w2_pairs, axis=1)
    ctx = (r, ref, bstash, w2_pairs) if want_grads else None
    return vals, ctx, w2_pairs


def _data_term_backward(x, theta, data, mode, ctx, seed):
    """Adjoints of sum_t seed_t * w2_t with respect to x and theta."""
    means_k, covs_k = theta.means, theta.covs
    if mode is Interpolation.WASSERSTEIN_BARYCENTER:
        r, stash, bstash = ctx
        sbar = _backend.bures_sq_fixed_backward(data._sqrt_covs, bstash, seed)
        xbar_fp, covsbar = _backend.barycenter_cov_backward(x, covs_k, stash, sbar)
        rs = seed[:, None] * r
        xbar = xbar_fp - 2.0 * rs @ means_k.T
        meansbar = -2.0 * (x.T @ rs)
        return xbar, meansbar, covsbar
    r, ref, bstash, w2_pairs = ctx
    t_len, k = x.shape
    d = means_k.shape[1]
    pair_seed = (seed[:, None] * x).reshape(-1)
    gpairs = _backend.bures_sq_fixed_backward(ref, bstash, pair_seed)
    covsbar = gpairs.reshape(t_len, k, d, d).sum(axis=0)
    xw = seed[:, None] * x
    diffs = means_k[None, :, :] - data.means[:, None, :]
    meansbar = 2.0 * np.einsum("tk,tkd->kd", xw, diffs)
    xbar = seed[:, None] * w2_pairs
    return xbar, meansbar, covsbar


def _innovation_prior(gammas, hyper, cfg, want_grads):
    if cfg.innovation_prior is InnovationPrior.BETA_MIXTURE:
        return log_prior_innovations(gammas, hyper, want_grads=want_grads)
    return log_prior_innovations_single(
        gammas, cfg.single_a, cfg.single_b, want_grads=want_grads
    )


def _check_shapes(seq, theta, hyper, data):
    if theta.n_states != seq.n_states or hyper.n_states != seq.n_states:
        raise DimensionMismatchError("state counts of innovations, states, and hyper disagree")
    if theta.dim != data.means.shape[1]:
        raise DimensionMismatchError(
            f"pure states have dimension {theta.dim}, data {data.means.shape[1]}"
        )
    if seq.horizon != len(data):
        raise DimensionMismatchError(
            f"innovations cover {seq.horizon} steps, data has {len(data)} windows"
        )


def objective(
    seq: InnovationSequence,
    theta: PureStates,
    hyper: BetaMixtureHyper,
    data: EmpiricalSequence,
    cfg: ObjectiveConfig,
    prior_cfg: ThetaPriorConfig,
) -> float:
    """Full objective F; raises ObjectiveNumericsError naming any bad term."""
    value, _ = objective_terms(seq, theta, hyper, data, cfg, prior_cfg)
    return value


def objective_terms(seq, theta, hyper, data, cfg, prior_cfg):
    """Objective value plus a per-term breakdown (for diagnostics)."""
    _check_shapes(seq, theta, hyper, data)
    lp_gamma = _innovation_prior(seq.gammas, hyper, cfg, want_grads=False)
    lp_theta = log_prior_theta(theta, prior_cfg)
    xs = unroll(seq)
    w2_vals, _, _ = _data_term_forward(
        xs, theta, data, cfg.interpolation, cfg.fixpoint_iters
    )
    if not np.all(np.isfinite(w2_vals)):
        bad = int(np.flatnonzero(~np.isfinite(w2_vals))[0])
        raise ObjectiveNumericsError("data", bad)
    for name, term in (("innovation_prior", lp_gamma), ("theta_prior", lp_theta)):
        if not np.isfinite(term):
            raise ObjectiveNumericsError(name)
    data_term = float(w2_vals.sum())
    value = -lp_gamma - lp_theta + cfg.lam * data_term
    terms = {
        "neg_log_prior_innovations": -lp_gamma,
        "neg_log_prior_theta": -lp_theta,
        "data_term": data_term,
        "per_window_w2": w2_vals,
        "trajectory": xs,
    }
    return value, terms


def value_and_grad_gamma_h(seq, theta, hyper, data, cfg, prior_cfg):
    """Objective and gradients for the innovation/hyperparameter block.

    Returns (value, grads) with grads holding 'gammas', 'x0' and, under the
    mixture prior, 'w', 'a1', 'b1'.
    """
    _check_shapes(seq, theta, hyper, data)
    prior = _innovation_prior(seq.gammas, hyper, cfg, want_grads=True)
    lp_gamma, pgrads = prior
    lp_theta = log_prior_theta(theta, prior_cfg)
    xs = unroll(seq)
    w2_vals, ctx, _ = _data_term_forward(
        xs, theta, data, cfg.interpolation, cfg.fixpoint_iters, want_grads=True
    )
    if not np.all(np.isfinite(w2_vals)):
        bad = int(np.flatnonzero(~np.isfinite(w2_vals))[0])
        raise ObjectiveNumericsError("data", bad)
    value = -lp_gamma - lp_theta + cfg.lam * float(w2_vals.sum())
    seed = np.full(len(data), cfg.lam)
    xbar, _, _ = _data_term_backward(xs, theta, data, cfg.interpolation, ctx, seed)
    x0bar, gbar_data = unroll_backward(seq, xs, xbar)
    grads = {"gammas": gbar_data - pgrads["gammas"], "x0": x0bar}
    if cfg.innovation_prior is InnovationPrior.BETA_MIXTURE:
        grads["w"] = -pgrads["w"]
        grads["a1"] = -pgrads["a1"]
        grads["b1"] = -pgrads["b1"]
    return value, grads


def value_and_grad_theta(seq, theta, hyper, data, cfg, prior_cfg, xs=None):
    """Objective and Euclidean gradients with respect to the pure states."""
    _check_shapes(seq, theta, hyper, data)
    lp_gamma = _innovation_prior(seq.gammas, hyper, cfg, want_grads=False)
    lp_theta, pg_means, pg_covs = log_prior_theta(theta, prior_cfg, want_grads=True)
    if xs is None:
        xs = unroll(seq)
    w2_vals, ctx, _ = _data_term_forward(
        xs, theta, data, cfg.interpolation, cfg.fixpoint_iters, want_grads=True
    )
    if not np.all(np.isfinite(w2_vals)):
        bad = int(np.flatnonzero(~np.isfinite(w2_vals))[0])
        raise ObjectiveNumericsError("data", bad)
    value = -lp_gamma - lp_theta + cfg.lam * float(w2_vals.sum())
    seed = np.full(len(data), cfg.lam)
    _, meansbar, covsbar = _data_term_backward(xs, theta, data, cfg.interpolation, ctx, seed)
    gmeans = meansbar - pg_means
    gcovs = sym(covsbar) - pg_covs
    return value, gmeans, gcovs
