"""Synthetic data generation following the model's own generative story.

Pure states are planted at prescribed Wasserstein distances from each other
(a mean-shift part and a Bures part, by default 1 + 4 = 5), the simplex
state ramps linearly between consecutive vertices (optionally holding at
each vertex first), and every step emits a block of samples from the exact
barycenter at that step's state.  Windowing the concatenated samples with
stride equal to the block size recovers one empirical Gaussian per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import StepTooLargeError
from .gaussians import GaussianParams, w2_gaussian
from .manifold import bw_exp, bw_metric
from .model import PureStates, WindowConfig

GEODESIC_TOL = 1e-6


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a planted instance.

    ``t_steps`` counts state steps; each step emits ``samples_per_window``
    raw samples (default 20 d).  Consecutive pure states sit at squared-W2
    distance e2 + b2 apart.  With ``hold_steps`` > 0 the trajectory holds at
    each vertex before ramping; otherwise it is a pure chain of linear ramps.
    """

    n_states: int
    dim: int
    t_steps: int
    e2: float = 1.0
    b2: float = 4.0
    samples_per_window: int | None = None
    seed: int = 0
    hold_steps: int = 0
    segment_lengths: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_states < 2:
            raise ValueError("need at least two states")
        if self.e2 <= 0 or self.b2 <= 0:
            raise ValueError("distance targets must be positive")
        if self.samples_per_window is None:
            object.__setattr__(self, "samples_per_window", 20 * self.dim)
        if self.samples_per_window < self.dim + 2:
            raise ValueError("samples_per_window too small for a full-rank window")
        if self.segment_lengths is not None:
            if len(self.segment_lengths) != self.n_states - 1:
                raise ValueError("need one segment length per consecutive state pair")
            if sum(self.segment_lengths) != self.t_steps:
                raise ValueError("segment lengths must sum to t_steps")

    @property
    def window_config(self) -> WindowConfig:
        spw = self.samples_per_window
        length = spw if spw % 2 == 1 else spw - 1
        return WindowConfig(n=(length - 1) // 2, delta=spw)


@dataclass(frozen=True)
class SynthDataset:
    """Samples plus everything needed to score a fit against the truth."""

    y: np.ndarray
    trajectory: np.ndarray
    theta: PureStates
    spec: SynthSpec

    @property
    def window_config(self) -> WindowConfig:
        return self.spec.window_config


def random_spd(d: int, eig_low: float = 0.5, eig_high: float = 1.5, seed=None) -> np.ndarray:
    """Random SPD matrix: Haar-random eigenvectors, uniform eigenvalues."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))[None, :]
    lam = rng.uniform(eig_low, eig_high, size=d)
    return (q * lam) @ q.T


def place_on_geodesic(
    base: GaussianParams, target_e2: float, target_b2: float, seed=None, max_tries: int = 20
) -> GaussianParams:
    """A Gaussian at prescribed squared distances from ``base``.

    The mean moves by sqrt(target_e2) along a random direction.  The
    covariance moves along the geodesic of a random symmetric tangent,
    scaled through the metric so the squared Bures distance hits target_b2,
    then polished by one secant correction; directions whose step leaves
    the SPD cone are redrawn.
    """
    if target_e2 < 0 or target_b2 < 0:
        raise ValueError("targets must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = base.dim
    v = rng.standard_normal(d)
    mean = base.mean + np.sqrt(target_e2) * v / np.linalg.norm(v)
    if target_b2 == 0.0:
        return GaussianParams(mean, base.cov)
    from .gaussians import bures_sq

    for attempt in range(max_tries):
        w = rng.standard_normal((d, d))
        if attempt < max_tries // 2:
            tangent = 0.5 * (w + w.T)
        else:
            # Large targets relative to tr(cov) leave the cone along most
            # symmetric directions; a PSD tangent only expands, so its
            # geodesic stays inside for any step length.
            tangent = w @ w.T
        t = np.sqrt(target_b2 / bw_metric(base.cov, tangent, tangent))
        try:
            cov = bw_exp(base.cov, t * tangent)
            got = bures_sq(base.cov, cov)
            if abs(got - target_b2) > GEODESIC_TOL:
                # One secant pass; the geodesic relation is exact, so this
                # only mops up rounding.
                t2 = t * np.sqrt(target_b2 / got)
                cov = bw_exp(base.cov, t2 * tangent)
                got = bures_sq(base.cov, cov)
            if abs(got - target_b2) <= GEODESIC_TOL:
                return GaussianParams(mean, cov)
        except StepTooLargeError:
            continue
    raise RuntimeError("could not place a point at the requested Bures distance")


def chain_states(spec: SynthSpec, rng: np.random.Generator) -> PureStates:
    """Plant n_states Gaussians, each a fixed W2 distance from the previous."""
    d = spec.dim
    first = GaussianParams(rng.standard_normal(d), random_spd(d, seed=rng))
    states = [first]
    for _ in range(spec.n_states - 1):
        states.append(place_on_geodesic(states[-1], spec.e2, spec.b2, seed=rng))
    return PureStates.from_gaussians(states)


def _ramp_trajectory(spec: SynthSpec) -> np.ndarray:
    k, total = spec.n_states, spec.t_steps
    if spec.hold_steps:
        n_ramps = k - 1
        ramp = (total - k * spec.hold_steps) // n_ramps
        if ramp < 1:
            raise ValueError("t_steps too small for the requested holds")
        pieces = []
        for j in range(k - 1):
            pieces.append(np.repeat(_vertex(k, j)[None, :], spec.hold_steps, axis=0))
            s = np.linspace(0.0, 1.0, ramp + 2)[1:-1, None]
            pieces.append((1 - s) * _vertex(k, j)[None, :] + s * _vertex(k, j + 1)[None, :])
        pieces.append(np.repeat(_vertex(k, k - 1)[None, :], spec.hold_steps, axis=0))
        xs = np.vstack(pieces)
        if xs.shape[0] < total:
            xs = np.vstack([xs, np.repeat(xs[-1][None, :], total - xs.shape[0], axis=0)])
        return xs[:total]
    lengths = spec.segment_lengths
    if lengths is None:
        base = total // (k - 1)
        lengths = [base] * (k - 1)
        lengths[-1] += total - base * (k - 1)
    pieces = []
    for j, ell in enumerate(lengths):
        # Segments share their junction vertex: the first segment spans
        # [0, 1] inclusive, later ones drop their start point.
        if j == 0:
            s = np.linspace(0.0, 1.0, ell)[:, None]
        else:
            s = np.linspace(0.0, 1.0, ell + 1)[1:, None]
        pieces.append((1 - s) * _vertex(k, j)[None, :] + s * _vertex(k, j + 1)[None, :])
    return np.vstack(pieces)


def _vertex(k: int, j: int) -> np.ndarray:
    e = np.zeros(k)
    e[j] = 1.0
    return e


def exact_barycenters(trajectory: np.ndarray, theta: PureStates, iters: int = 40):
    """Ground-truth barycenter parameters at each trajectory step."""
    means = trajectory @ theta.means
    covs, _, _ = _backend.barycenter_cov_fixpoint(trajectory, theta.covs, iters)
    return means, covs


def generate_toy(spec: SynthSpec) -> SynthDataset:
    """Draw a full synthetic series: states, trajectory, and per-step samples."""
    rng = np.random.default_rng(spec.seed)
    theta = chain_states(spec, rng)
    xs = _ramp_trajectory(spec)
    means, covs = exact_barycenters(xs, theta)
    chols = np.linalg.cholesky(covs)
    spw = spec.samples_per_window
    draws = rng.standard_normal((spec.t_steps, spw, spec.dim))
    y = means[:, None, :] + draws @ np.swapaxes(chols, -1, -2)
    return SynthDataset(
        y=y.reshape(spec.t_steps * spw, spec.dim),
        trajectory=xs,
        theta=theta,
        spec=spec,
    )


def mean_pairwise_state_w2(theta: PureStates) -> float:
    """Mean squared-W2 distance over distinct pure-state pairs."""
    k = theta.n_states
    vals = []
    for i in range(k):
        for j in range(i + 1, k):
            vals.append(w2_gaussian(theta.state(i), theta.state(j)))
    return float(np.mean(vals))
