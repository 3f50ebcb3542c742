"""Coordinate-descent estimation of the model parameters.

Alternates two blocks until the cost stops improving: Adam steps on the
innovations and transition hyperparameters (with post-step clamping into
their boxes), then a backtracking line search on the pure states, under
either Bures-Wasserstein product geometry or a Euclidean parameterization
of the Cholesky factor.  The outer loop is a do-while on the cost decrease
and the emitted cost trace is monotone by construction: an Adam block that
raises the cost is rolled back (once with a halved learning rate, then
discarded).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import model as _model
from ._kernels_np import sym
from .errors import MonotonicityError, StepTooLargeError
from .gmm import average_covariance_eigenvalue, fit_gmm_em, kmeans_pp
from .manifold import bw_exp
from .model import (
    EmpiricalSequence,
    Interpolation,
    InnovationPrior,
    ObjectiveConfig,
    PureStates,
    ThetaPriorConfig,
    objective,
    value_and_grad_gamma_h,
    value_and_grad_theta,
)
from .simplexwalk import GAMMA_EPS, BetaMixtureHyper, InnovationSequence, default_hyper, project_hyper, unroll

MONOTONE_SLACK = 1e-9


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam accumulators for a named family of parameter arrays."""

    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _project_params(params: dict) -> dict:
    out = dict(params)
    if "gammas" in out:
        out["gammas"] = np.clip(out["gammas"], GAMMA_EPS, 1.0 - GAMMA_EPS)
    if "x0" in out:
        x0 = np.clip(out["x0"], GAMMA_EPS, 1.0)
        out["x0"] = x0 / x0.sum()
    if "w" in out:
        out["w"], out["a1"], out["b1"] = project_hyper(out["w"], out["a1"], out["b1"])
    return out


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One Adam update with bias correction, then clamping into the boxes.

    ``params`` and ``grads`` are dicts of arrays keyed by parameter name
    (gammas, x0, and optionally w/a1/b1).  The state is updated in place.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    out = {}
    for name, value in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        out[name] = value - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return _project_params(out)


# ---------------------------------------------------------------------------
# Line searches over the pure states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineSearchConfig:
    """Backtracking parameters: initial step, sufficient decrease, contraction,
    and the per-sweep convergence threshold."""

    alpha0: float = 1e-1
    beta: float = 1e-10
    c: float = 0.5
    eta: float = 0.05
    max_sweeps: int = 200
    alpha_floor: float = 1e-16

    def __post_init__(self):
        if not (self.alpha0 > 0 and 0 < self.c < 1 and self.beta > 0):
            raise ValueError("need alpha0 > 0, 0 < c < 1, beta > 0")


class ThetaObjective:
    """The objective restricted to the pure states, at a frozen trajectory.

    The trajectory defaults to the unroll of ``seq`` but can be pinned
    explicitly (the geometry benchmark fixes it to the ground truth).
    """

    def __init__(self, seq, hyper, data, cfg, prior_cfg, xs=None):
        self._args = (seq, hyper, data, cfg, prior_cfg)
        self._xs = unroll(seq) if xs is None else np.asarray(xs, dtype=np.float64)

    def value(self, theta: PureStates) -> float:
        seq, hyper, data, cfg, prior_cfg = self._args
        val, _, _ = _model._data_term_forward(
            self._xs, theta, data, cfg.interpolation, cfg.fixpoint_iters
        )
        lp_theta = _model.log_prior_theta(theta, prior_cfg)
        lp_gamma = _model._innovation_prior(seq.gammas, hyper, cfg, want_grads=False)
        return -lp_gamma - lp_theta + cfg.lam * float(val.sum())

    def value_and_grad(self, theta: PureStates):
        seq, hyper, data, cfg, prior_cfg = self._args
        return value_and_grad_theta(seq, theta, hyper, data, cfg, prior_cfg, xs=self._xs)


def _bw_direction(theta, gmeans, gcovs):
    """Riemannian gradient and its squared metric norm on the product manifold."""
    rg_covs = sym(2.0 * (gcovs @ theta.covs + theta.covs @ gcovs))
    # g(G, G) = <G_euclid, G_riemann> under the calibrated metric.
    gnorm_sq = float(np.sum(gmeans * gmeans)) + float(np.sum(gcovs * rg_covs))
    return rg_covs, gnorm_sq


def _bw_candidate(theta, gmeans, rg_covs, alpha):
    covs = np.empty_like(theta.covs)
    for k in range(theta.n_states):
        covs[k] = bw_exp(theta.covs[k], -alpha * rg_covs[k])
    return PureStates(means=theta.means - alpha * gmeans, covs=covs)


def riemannian_line_search(
    theta: PureStates, fun: ThetaObjective, cfg: LineSearchConfig
) -> tuple[PureStates, dict]:
    """Armijo backtracking along the negative Riemannian gradient.

    Sweeps end when the per-sweep decrease drops to ``cfg.eta``; each sweep
    contracts the step until f(p) - f(candidate) > alpha * beta * g(grad, grad).
    Returns the new states plus an info dict (iterations, evals, stalled).
    """
    return _line_search(theta, fun, cfg, geometry="bw")


def euclidean_cholesky_search(
    theta: PureStates, fun: ThetaObjective, cfg: LineSearchConfig
) -> tuple[PureStates, dict]:
    """Same Armijo scheme with covariances parameterized by Cholesky factors."""
    return _line_search(theta, fun, cfg, geometry="cholesky")


def _line_search(theta, fun, cfg, geometry):
    info = {"iterations": 0, "evals": 0, "stalled": False, "geometry": geometry}
    f_curr = fun.value(theta)
    info["evals"] += 1
    chol = np.linalg.cholesky(theta.covs) if geometry == "cholesky" else None
    for _ in range(cfg.max_sweeps):
        f_val, gmeans, gcovs = fun.value_and_grad(theta)
        if geometry == "bw":
            rg_covs, gnorm_sq = _bw_direction(theta, gmeans, gcovs)
        else:
            glower = 2.0 * np.tril(gcovs @ chol)
            gnorm_sq = float(np.sum(gmeans * gmeans)) + float(np.sum(glower * glower))
        if gnorm_sq <= 1e-18:
            break
        alpha = cfg.alpha0
        accepted = False
        while alpha >= cfg.alpha_floor:
            try:
                if geometry == "bw":
                    cand = _bw_candidate(theta, gmeans, rg_covs, alpha)
                    cand_chol = None
                else:
                    cand_chol = chol - alpha * glower
                    covs = cand_chol @ np.swapaxes(cand_chol, -1, -2)
                    if np.any(np.linalg.eigvalsh(covs)[:, 0] <= 0):
                        raise StepTooLargeError("Cholesky step left the SPD cone")
                    cand = PureStates(means=theta.means - alpha * gmeans, covs=covs)
                f_cand = fun.value(cand)
                info["evals"] += 1
                if f_curr - f_cand > alpha * cfg.beta * gnorm_sq:
                    accepted = True
                    break
            except StepTooLargeError:
                pass
            alpha *= cfg.c
        if not accepted:
            info["stalled"] = True
            break
        decrease = f_curr - f_cand
        theta, f_curr, chol = cand, f_cand, cand_chol
        info["iterations"] += 1
        if decrease <= cfg.eta:
            break
    info["final_value"] = f_curr
    return theta, info


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DwbParams:
    """The full learnable bundle plus the prior configuration."""

    seq: InnovationSequence
    theta: PureStates
    hyper: BetaMixtureHyper
    prior: ThetaPriorConfig


def _pooled_moments(means, covs):
    mu = means.mean(axis=0)
    centered = means - mu
    spread = centered.T @ centered / means.shape[0]
    return mu, sym(covs.mean(axis=0) + spread)


def initialize(
    data: EmpiricalSequence,
    k: int,
    labels=None,
    samples=None,
    seed: int = 0,
    s: float = 1.0,
) -> DwbParams:
    """Starting parameters for the fit.

    Innovations start at their lower clamp (a frozen trajectory at the
    uniform state), hyperparameters at (w, a1, b1) = (0.5, 10, 20).  Pure
    states come from provided window labels or, by default, seeded
    k-means++ on the window means; each state pools its windows' moments.
    The prior reference uses the global data mean and, when raw samples are
    available, the average covariance eigenvalue of a K-component EM fit.
    """
    t_len, d = data.means.shape
    if labels is None:
        # Cluster windows in the flat W2 embedding [mean, vec(cov^1/2)]:
        # squared Euclidean distance there matches the Gaussian W2 exactly
        # for commuting covariances and upper-bounds the Bures part in
        # general, so covariance-separated states stay distinguishable.
        features = np.hstack([data.means, data._sqrt_covs.reshape(t_len, d * d)])
        _, labels = kmeans_pp(features, k, np.random.default_rng(seed))
    else:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (t_len,):
            raise ValueError(f"labels must have one entry per window ({t_len})")
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    global_mu, global_cov = _pooled_moments(data.means, data.covs)
    for j in range(k):
        idx = labels == j
        if not np.any(idx):
            warnings.warn(
                f"state {j} received no windows; duplicating global moments",
                RuntimeWarning,
            )
            means[j], covs[j] = global_mu, global_cov
            continue
        means[j], covs[j] = _pooled_moments(data.means[idx], data.covs[idx])
    theta = PureStates(means=means, covs=covs)

    if samples is not None:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        m0 = samples.mean(axis=0)
        _, em_covs, _, _ = fit_gmm_em(samples, k, seed=seed)
        sigma0 = average_covariance_eigenvalue(em_covs)
    else:
        m0 = global_mu
        sigma0 = average_covariance_eigenvalue(covs)
    prior = ThetaPriorConfig(m0=m0, sigma0=float(sigma0), s=s, t_scale=t_len)

    seq = InnovationSequence(
        x0=np.full(k, 1.0 / k), gammas=np.full((t_len, k), GAMMA_EPS)
    )
    return DwbParams(seq=seq, theta=theta, hyper=default_hyper(k), prior=prior)


# ---------------------------------------------------------------------------
# The fit loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    """Outer-loop, Adam-block, and line-search settings."""

    eta_outer: float = 1e-4
    max_outer: int = 50
    adam_lr: float = 2e-3
    adam_max_steps: int = 200
    adam_sweep: int = 10
    eta_inner: float = 0.05
    reset_adam_each_outer: bool = True
    theta_geometry: str = "bw"
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)

    def __post_init__(self):
        if self.theta_geometry not in ("bw", "cholesky"):
            raise ValueError("theta_geometry must be 'bw' or 'cholesky'")


@dataclass(frozen=True)
class FitReport:
    """Everything a fit produces: parameters, trajectory, trace, diagnostics."""

    theta: PureStates
    seq: InnovationSequence
    hyper: BetaMixtureHyper
    prior: ThetaPriorConfig
    trajectory: np.ndarray
    barycenter_means: np.ndarray
    barycenter_covs: np.ndarray
    cost_trace: tuple[float, ...]
    flags: dict
    config: dict
    seed: int

    def __post_init__(self):
        trace = np.asarray(self.cost_trace)
        if np.any(np.diff(trace) > MONOTONE_SLACK):
            raise MonotonicityError("cost trace increased beyond slack")


def _params_of(seq: InnovationSequence, hyper: BetaMixtureHyper, use_hyper: bool) -> dict:
    params = {"gammas": seq.gammas.copy(), "x0": seq.x0.copy()}
    if use_hyper:
        params.update(w=hyper.w.copy(), a1=hyper.a1.copy(), b1=hyper.b1.copy())
    return params


def _rebuild(params: dict, hyper: BetaMixtureHyper, use_hyper: bool):
    seq = InnovationSequence(x0=params["x0"], gammas=params["gammas"])
    if use_hyper:
        hyper = BetaMixtureHyper(
            w=params["w"], a1=params["a1"], b1=params["b1"], a0=hyper.a0, b0=hyper.b0
        )
    return seq, hyper


def _adam_block(seq, theta, hyper, data, cfg, prior_cfg, fit_cfg, state):
    """Run one Adam block, sweep by sweep; never ends above its starting cost.

    Each sweep (adam_sweep steps) is accepted only if it did not raise the
    cost; a raising sweep is rolled back and retried once at half the
    learning rate, and the block stops if the retry also fails.  The block
    additionally stops early once a sweep improves by at most eta_inner.
    """
    use_hyper = cfg.innovation_prior is InnovationPrior.BETA_MIXTURE
    c_start = objective(seq, theta, hyper, data, cfg, prior_cfg)
    local = AdamState(lr=fit_cfg.adam_lr) if fit_cfg.reset_adam_each_outer else state

    def run_sweep(params, adam, n_steps):
        cur_seq, cur_hyper = _rebuild(params, hyper, use_hyper)
        for _ in range(n_steps):
            _, grads = value_and_grad_gamma_h(
                cur_seq, theta, cur_hyper, data, cfg, prior_cfg
            )
            params = adam_step(params, grads, adam)
            cur_seq, cur_hyper = _rebuild(params, cur_hyper, use_hyper)
        cost = objective(cur_seq, theta, cur_hyper, data, cfg, prior_cfg)
        return params, cost

    params = _params_of(seq, hyper, use_hyper)
    c_curr = c_start
    halvings = 0
    rolled_back = False
    n_sweeps = max(1, fit_cfg.adam_max_steps // fit_cfg.adam_sweep)
    for _ in range(n_sweeps):
        snapshot = {k: v.copy() for k, v in params.items()}
        adam_snapshot = _copy_adam(local)
        params_new, c_new = run_sweep(params, local, fit_cfg.adam_sweep)
        if c_new > c_curr:
            # Roll the sweep back and retry once at half the learning rate.
            halvings += 1
            local = _copy_adam(adam_snapshot)
            local.lr = local.lr / 2.0
            params_new, c_new = run_sweep(
                {k: v.copy() for k, v in snapshot.items()}, local, fit_cfg.adam_sweep
            )
            if c_new > c_curr:
                params = snapshot
                local = adam_snapshot
                rolled_back = True
                break
        improved = c_curr - c_new
        params, c_curr = params_new, c_new
        if improved <= fit_cfg.eta_inner:
            break
    new_seq, new_hyper = _rebuild(params, hyper, use_hyper)
    return new_seq, new_hyper, c_curr, {"rolled_back": rolled_back, "halved": halvings > 0}


def _copy_adam(state: AdamState) -> AdamState:
    return AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        step_count=state.step_count,
        m={k: v.copy() for k, v in state.m.items()},
        v={k: v.copy() for k, v in state.v.items()},
    )


def fit(
    data: EmpiricalSequence,
    k: int,
    cfg: ObjectiveConfig | None = None,
    fit_cfg: FitConfig | None = None,
    seed: int = 0,
    labels=None,
    samples=None,
    s: float = 1.0,
    init: DwbParams | None = None,
) -> FitReport:
    """Estimate all model parameters from a windowed series.

    Coordinate descent: an Adam block over the innovations (and, under the
    mixture prior, the transition hyperparameters), then a line search over
    the pure states, repeated while the cost drops by more than the outer
    threshold.  Deterministic for a fixed seed, data, and configuration.
    """
    cfg = cfg or ObjectiveConfig()
    fit_cfg = fit_cfg or FitConfig()
    if init is None:
        init = initialize(data, k, labels=labels, samples=samples, seed=seed, s=s)
    seq, theta, hyper, prior_cfg = init.seq, init.theta, init.hyper, init.prior

    state = AdamState(lr=fit_cfg.adam_lr)
    trace = [objective(seq, theta, hyper, data, cfg, prior_cfg)]
    flags = {"adam_rollbacks": 0, "adam_halvings": 0, "theta_stalls": 0,
             "flagged_windows": list(data.flagged)}
    searcher = (
        riemannian_line_search if fit_cfg.theta_geometry == "bw" else euclidean_cholesky_search
    )
    for _ in range(fit_cfg.max_outer):
        seq, hyper, c_adam, adam_info = _adam_block(
            seq, theta, hyper, data, cfg, prior_cfg, fit_cfg, state
        )
        flags["adam_rollbacks"] += int(adam_info["rolled_back"])
        flags["adam_halvings"] += int(adam_info["halved"])
        fun = ThetaObjective(seq, hyper, data, cfg, prior_cfg)
        theta, ls_info = searcher(theta, fun, fit_cfg.line_search)
        flags["theta_stalls"] += int(ls_info["stalled"])
        c_new = objective(seq, theta, hyper, data, cfg, prior_cfg)
        if c_new > trace[-1] + MONOTONE_SLACK:
            raise MonotonicityError(
                f"outer cost rose from {trace[-1]!r} to {c_new!r}; "
                f"state: adam={adam_info}, line_search={ls_info}"
            )
        improved = trace[-1] - c_new
        trace.append(c_new)
        if improved <= fit_cfg.eta_outer:
            break

    xs = unroll(seq)
    b_covs, _, _ = _model._backend.barycenter_cov_fixpoint(
        xs, theta.covs, cfg.fixpoint_iters
    )
    report = FitReport(
        theta=theta,
        seq=seq,
        hyper=hyper,
        prior=prior_cfg,
        trajectory=xs,
        barycenter_means=xs @ theta.means,
        barycenter_covs=b_covs,
        cost_trace=tuple(trace),
        flags=flags,
        config={
            "k": k,
            "objective": {
                "lam": cfg.lam,
                "interpolation": cfg.interpolation.value,
                "fixpoint_iters": cfg.fixpoint_iters,
                "innovation_prior": cfg.innovation_prior.value,
                "single_a": cfg.single_a,
                "single_b": cfg.single_b,
            },
            "fit": {
                "eta_outer": fit_cfg.eta_outer,
                "max_outer": fit_cfg.max_outer,
                "adam_lr": fit_cfg.adam_lr,
                "adam_max_steps": fit_cfg.adam_max_steps,
                "adam_sweep": fit_cfg.adam_sweep,
                "eta_inner": fit_cfg.eta_inner,
                "reset_adam_each_outer": fit_cfg.reset_adam_each_outer,
                "theta_geometry": fit_cfg.theta_geometry,
                "line_search": {
                    "alpha0": fit_cfg.line_search.alpha0,
                    "beta": fit_cfg.line_search.beta,
                    "c": fit_cfg.line_search.c,
                    "eta": fit_cfg.line_search.eta,
                    "max_sweeps": fit_cfg.line_search.max_sweeps,
                },
            },
            "prior": {
                "m0": prior_cfg.m0.tolist(),
                "sigma0": prior_cfg.sigma0,
                "s": prior_cfg.s,
                "t_scale": prior_cfg.t_scale,
            },
            "window": {"n": data.config.n, "delta": data.config.delta},
        },
        seed=seed,
    )
    return report
