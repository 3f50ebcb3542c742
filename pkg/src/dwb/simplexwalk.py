"""Simplex-valued random walk driven by Beta-mixture innovations.

The state update blends the previous state with per-component steps toward
the simplex vertices:

    x_t = (1 - mean(gamma_t)) x_{t-1} + gamma_t / K,

so any innovations in [0, 1]^K keep the state on the simplex.  Innovations
are IID across time and components under a two-component Beta mixture: a
fixed narrow component for stationary stretches and a learnable component
for transitions.  A single-Beta variant of the prior is kept for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .errors import DimensionMismatchError

GAMMA_EPS = 1e-6
SIMPLEX_DRIFT_TOL = 1e-12

# Stationary-component shape parameters, fixed for all states.
A0_DEFAULT = 1.1
B0_DEFAULT = 20.0

# Boxes for the learnable hyperparameters.
W_LO, W_HI = 0.01, 0.99
A1_MIN = 1.1
MEAN_RATIO_MIN = 0.15
B1_MIN = 1.0 + 1e-6


@dataclass(frozen=True)
class InnovationSequence:
    """Initial state plus the (T, K) innovation draws that generate a trajectory.

    Innovations are clamped into [1e-6, 1 - 1e-6] on construction; the
    initial state must lie on the simplex.
    """

    x0: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        gammas = np.asarray(self.gammas, dtype=np.float64)
        if x0.ndim != 1 or gammas.ndim != 2 or gammas.shape[1] != x0.size:
            raise DimensionMismatchError(
                f"x0 of length {x0.size} needs gammas of shape (T, {x0.size}), "
                f"got {gammas.shape}"
            )
        if np.any(x0 < 0) or abs(float(x0.sum()) - 1.0) > 1e-10:
            raise ValueError("x0 must lie on the simplex")
        object.__setattr__(self, "x0", x0 / x0.sum())
        object.__setattr__(self, "gammas", np.clip(gammas, GAMMA_EPS, 1.0 - GAMMA_EPS))

    @property
    def horizon(self) -> int:
        return self.gammas.shape[0]

    @property
    def n_states(self) -> int:
        return self.x0.size


@dataclass(frozen=True)
class BetaMixtureHyper:
    """Learnable innovation-prior hyperparameters, one per state.

    ``w`` weights the fixed stationary component Beta(a0, b0); the
    transition component Beta(a1, b1) is learnable.  Boxes: w in
    [0.01, 0.99], a1 >= 1.1, a1/(a1+b1) >= 0.15 (mode-collapse guard).
    """

    w: np.ndarray
    a1: np.ndarray
    b1: np.ndarray
    a0: float = A0_DEFAULT
    b0: float = B0_DEFAULT

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        a1 = np.asarray(self.a1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        if not (w.shape == a1.shape == b1.shape) or w.ndim != 1:
            raise DimensionMismatchError("w, a1, b1 must share one length")
        if np.any(w < W_LO - 1e-12) or np.any(w > W_HI + 1e-12):
            raise ValueError(f"w must lie in [{W_LO}, {W_HI}]")
        if np.any(a1 < A1_MIN - 1e-12):
            raise ValueError(f"a1 must be >= {A1_MIN}")
        if np.any(b1 <= 1.0):
            raise ValueError("b1 must be > 1")
        if np.any(a1 / (a1 + b1) < MEAN_RATIO_MIN - 1e-12):
            raise ValueError(f"a1/(a1+b1) must be >= {MEAN_RATIO_MIN}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "b1", b1)

    @property
    def n_states(self) -> int:
        return self.w.size


def default_hyper(n_states: int) -> BetaMixtureHyper:
    """Initial hyperparameters: w = 0.5, (a1, b1) = (10, 20) for every state."""
    return BetaMixtureHyper(
        w=np.full(n_states, 0.5),
        a1=np.full(n_states, 10.0),
        b1=np.full(n_states, 20.0),
    )


def project_hyper(w, a1, b1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamp raw hyperparameter values into their boxes (post-update projection)."""
    w = np.clip(w, W_LO, W_HI)
    a1 = np.maximum(a1, A1_MIN)
    # a1/(a1+b1) >= r  <=>  b1 <= a1 (1 - r) / r
    b1 = np.clip(b1, B1_MIN, a1 * (1.0 - MEAN_RATIO_MIN) / MEAN_RATIO_MIN)
    return w, a1, b1


# ---------------------------------------------------------------------------
# State recursion
# ---------------------------------------------------------------------------


def state_update(x_prev: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """One step of the simplex walk; renormalizes only to absorb rounding."""
    x_prev = np.asarray(x_prev, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if x_prev.shape != gamma.shape:
        raise DimensionMismatchError(f"state {x_prev.shape} vs innovation {gamma.shape}")
    k = x_prev.size
    x = (1.0 - gamma.sum() / k) * x_prev + gamma / k
    total = x.sum()
    if abs(total - 1.0) > SIMPLEX_DRIFT_TOL:
        x = x / total
    return x


def unroll(seq: InnovationSequence) -> np.ndarray:
    """Deterministic trajectory (T, K) generated by iterating the update from x0."""
    t_len, k = seq.gammas.shape
    xs = np.empty((t_len, k))
    x = seq.x0
    for t in range(t_len):
        x = state_update(x, seq.gammas[t])
        xs[t] = x
    return xs


def unroll_backward(
    seq: InnovationSequence, xs: np.ndarray, xs_bar: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of unroll: per-step state seeds -> (x0_bar, gammas_bar).

    ``xs`` is the forward trajectory and ``xs_bar`` the gradient of some
    scalar with respect to each x_t.  The renormalization guard is treated
    as identity (its correction is below rounding).
    """
    t_len, k = seq.gammas.shape
    gbar = np.zeros((t_len, k))
    xbar = np.zeros(k)
    for t in range(t_len - 1, -1, -1):
        xbar = xbar + xs_bar[t]
        x_prev = seq.x0 if t == 0 else xs[t - 1]
        shrink = 1.0 - seq.gammas[t].sum() / k
        gbar[t] = xbar / k - float(xbar @ x_prev) / k
        xbar = shrink * xbar
    return xbar, gbar


# ---------------------------------------------------------------------------
# Innovation priors
# ---------------------------------------------------------------------------


def _log_beta_pdf(g, a, b):
    return (a - 1.0) * np.log(g) + (b - 1.0) * np.log1p(-g) - (
        gammaln(a) + gammaln(b) - gammaln(a + b)
    )


def log_prior_innovations(gammas: np.ndarray, hyper: BetaMixtureHyper, want_grads: bool = False):
    """Log density of the innovations under the two-component Beta mixture.

    Returns the scalar log prior, or (value, grads) with grads a dict of
    derivatives with respect to ``gammas``, ``w``, ``a1`` and ``b1``.
    """
    g = np.asarray(gammas, dtype=np.float64)
    if g.ndim != 2 or g.shape[1] != hyper.n_states:
        raise DimensionMismatchError(
            f"gammas shape {g.shape} does not match {hyper.n_states} states"
        )
    if np.any(g <= 0.0) or np.any(g >= 1.0):
        raise ValueError("innovations must lie strictly inside (0, 1)")
    a0, b0 = hyper.a0, hyper.b0
    a1, b1, w = hyper.a1, hyper.b1, hyper.w
    log_f0 = _log_beta_pdf(g, a0, b0)
    log_f1 = _log_beta_pdf(g, a1[None, :], b1[None, :])
    l0 = np.log(w)[None, :] + log_f0
    l1 = np.log1p(-w)[None, :] + log_f1
    m = np.logaddexp(l0, l1)
    value = float(m.sum())
    if not np.isfinite(value):
        raise ValueError("innovation log prior is not finite")
    if not want_grads:
        return value
    r0 = np.exp(l0 - m)
    r1 = np.exp(l1 - m)
    dlogf0 = (a0 - 1.0) / g - (b0 - 1.0) / (1.0 - g)
    dlogf1 = (a1[None, :] - 1.0) / g - (b1[None, :] - 1.0) / (1.0 - g)
    grads = {
        "gammas": r0 * dlogf0 + r1 * dlogf1,
        "w": (r0 / w[None, :] - r1 / (1.0 - w)[None, :]).sum(axis=0),
        "a1": (r1 * (np.log(g) - digamma(a1)[None, :] + digamma(a1 + b1)[None, :])).sum(axis=0),
        "b1": (r1 * (np.log1p(-g) - digamma(b1)[None, :] + digamma(a1 + b1)[None, :])).sum(axis=0),
    }
    return value, grads


def log_prior_innovations_single(
    gammas: np.ndarray, a: float, b: float, want_grads: bool = False
):
    """Single-Beta innovation prior (the non-mixture ablation variant)."""
    g = np.asarray(gammas, dtype=np.float64)
    if np.any(g <= 0.0) or np.any(g >= 1.0):
        raise ValueError("innovations must lie strictly inside (0, 1)")
    value = float(_log_beta_pdf(g, a, b).sum())
    if not np.isfinite(value):
        raise ValueError("innovation log prior is not finite")
    if not want_grads:
        return value
    grads = {"gammas": (a - 1.0) / g - (b - 1.0) / (1.0 - g)}
    return value, grads


# ---------------------------------------------------------------------------
# Forward sampling
# ---------------------------------------------------------------------------


def simulate(
    t_len: int,
    n_states: int,
    hyper: BetaMixtureHyper,
    x0: np.ndarray,
    seed: int,
) -> tuple[InnovationSequence, np.ndarray]:
    """Draw innovations from the mixture prior and unroll the trajectory.

    Reproducible from the seed: component choices are Bernoulli(w) toward the
    stationary component, then Beta draws with that component's shapes.
    """
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    rng = np.random.default_rng(seed)
    pick_stationary = rng.random((t_len, n_states)) < hyper.w[None, :]
    g_stat = rng.beta(hyper.a0, hyper.b0, size=(t_len, n_states))
    g_tran = rng.beta(
        np.broadcast_to(hyper.a1, (t_len, n_states)),
        np.broadcast_to(hyper.b1, (t_len, n_states)),
    )
    gammas = np.where(pick_stationary, g_stat, g_tran)
    seq = InnovationSequence(x0=np.asarray(x0, dtype=np.float64), gammas=gammas)
    return seq, unroll(seq)
