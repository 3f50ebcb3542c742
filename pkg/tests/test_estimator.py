"""Estimator blocks: Adam, line searches, initialization, EM, and fit."""

import numpy as np
import pytest

from dwb.estimator import (
    AdamState,
    DwbParams,
    FitConfig,
    LineSearchConfig,
    ThetaObjective,
    adam_step,
    euclidean_cholesky_search,
    fit,
    initialize,
    riemannian_line_search,
)
from dwb.gmm import fit_gmm_em
from dwb.model import (
    Interpolation,
    ObjectiveConfig,
    PureStates,
    ThetaPriorConfig,
    WindowConfig,
    window_series,
)
from dwb.simplexwalk import GAMMA_EPS

from .test_kernels import random_spd


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = {"gammas": np.full((4, 2), 0.5), "x0": np.array([0.5, 0.5])}
        grads = {"gammas": np.zeros((4, 2)), "x0": np.zeros(2)}
        out = adam_step(params, grads, AdamState())
        np.testing.assert_allclose(out["gammas"], params["gammas"])
        np.testing.assert_allclose(out["x0"], params["x0"])

    def test_first_step_magnitude_is_lr(self):
        # With constant unit gradient the bias-corrected first step is ~lr.
        state = AdamState(lr=2e-3)
        params = {"gammas": np.array([[0.5]])}
        grads = {"gammas": np.array([[1.0]])}
        out = adam_step(params, grads, state)
        step = 0.5 - out["gammas"][0, 0]
        assert step == pytest.approx(2e-3, rel=1e-4)

    def test_clamping_at_upper_bound(self):
        state = AdamState(lr=0.1)
        params = {"gammas": np.array([[1.0 - GAMMA_EPS]])}
        grads = {"gammas": np.array([[-1.0]])}
        out = adam_step(params, grads, state)
        assert out["gammas"][0, 0] == 1.0 - GAMMA_EPS

    def test_x0_stays_on_simplex(self):
        state = AdamState(lr=0.5)
        params = {"x0": np.array([0.9, 0.1])}
        grads = {"x0": np.array([5.0, -5.0])}
        out = adam_step(params, grads, state)
        assert out["x0"].sum() == pytest.approx(1.0)
        assert np.all(out["x0"] >= GAMMA_EPS / 2)

    def test_hyper_boxes_hold(self):
        state = AdamState(lr=10.0)
        params = {"w": np.array([0.5]), "a1": np.array([10.0]), "b1": np.array([20.0])}
        grads = {"w": np.array([1.0]), "a1": np.array([5.0]), "b1": np.array([-50.0])}
        out = adam_step(params, grads, state)
        assert 0.01 <= out["w"][0] <= 0.99
        assert out["a1"][0] >= 1.1
        assert out["a1"][0] / (out["a1"][0] + out["b1"][0]) >= 0.15 - 1e-12

    def test_nonfinite_gradient_aborts(self):
        with pytest.raises(FloatingPointError, match="gammas"):
            adam_step(
                {"gammas": np.array([[0.5]])},
                {"gammas": np.array([[np.nan]])},
                AdamState(),
            )


# ---------------------------------------------------------------------------
# Line searches
# ---------------------------------------------------------------------------


class _QuadraticMeanObjective:
    """f(theta) = sum_k ||m_k - target_k||^2 with covariances ignored."""

    def __init__(self, targets):
        self.targets = targets

    def value(self, theta):
        return float(np.sum((theta.means - self.targets) ** 2))

    def value_and_grad(self, theta):
        g = 2.0 * (theta.means - self.targets)
        return self.value(theta), g, np.zeros_like(theta.covs)


class TestLineSearches:
    def _theta(self, rng, k=2, d=2):
        return PureStates(
            means=rng.standard_normal((k, d)),
            covs=np.stack([random_spd(rng, d) for _ in range(k)]),
        )

    @pytest.mark.parametrize("search", [riemannian_line_search, euclidean_cholesky_search])
    def test_stationary_point_returns_input(self, search):
        rng = np.random.default_rng(0)
        theta = self._theta(rng)
        fun = _QuadraticMeanObjective(theta.means.copy())
        out, info = search(theta, fun, LineSearchConfig())
        assert info["iterations"] == 0
        np.testing.assert_allclose(out.means, theta.means)

    @pytest.mark.parametrize("search", [riemannian_line_search, euclidean_cholesky_search])
    def test_quadratic_mean_converges_to_minimizer(self, search):
        rng = np.random.default_rng(1)
        theta = self._theta(rng)
        targets = rng.standard_normal(theta.means.shape)
        fun = _QuadraticMeanObjective(targets)
        out, info = search(theta, fun, LineSearchConfig(eta=1e-10, max_sweeps=2000))
        np.testing.assert_allclose(out.means, targets, atol=1e-3)
        assert fun.value(out) < 1e-6

    def test_monotone_decrease_on_model_objective(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal((200, 2))
        y[100:] += 3.0
        data = window_series(y, WindowConfig(n=4, delta=10))
        params = initialize(data, 2, seed=0)
        fun = ThetaObjective(
            params.seq, params.hyper, data, ObjectiveConfig(lam=10.0), params.prior
        )
        f0 = fun.value(params.theta)
        out, info = riemannian_line_search(params.theta, fun, LineSearchConfig())
        assert fun.value(out) <= f0 + 1e-12


# ---------------------------------------------------------------------------
# GMM EM and initialization
# ---------------------------------------------------------------------------


class TestGmmEm:
    def test_single_component_exact_moments(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal((300, 2)) * 1.5 + 2.0
        means, covs, weights, trace = fit_gmm_em(y, 1, seed=0)
        np.testing.assert_allclose(means[0], y.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(covs[0], np.cov(y.T, ddof=0), atol=1e-4)
        assert weights[0] == pytest.approx(1.0)

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((400, 2)) * 0.3 + np.array([-3.0, 0.0])
        b = rng.standard_normal((400, 2)) * 0.3 + np.array([3.0, 1.0])
        y = np.vstack([a, b])
        means, _, _, _ = fit_gmm_em(y, 2, seed=1)
        got = means[np.argsort(means[:, 0])]
        np.testing.assert_allclose(got[0], [-3.0, 0.0], atol=0.05)
        np.testing.assert_allclose(got[1], [3.0, 1.0], atol=0.05)

    def test_loglik_monotone(self):
        rng = np.random.default_rng(5)
        y = np.vstack(
            [rng.standard_normal((150, 2)), rng.standard_normal((150, 2)) + 2.0]
        )
        _, _, _, trace = fit_gmm_em(y, 3, seed=2)
        assert np.all(np.diff(trace) >= -1e-9)


class TestInitialize:
    def _two_state_series(self, rng, n_per=300):
        a = rng.standard_normal((n_per, 2)) * 0.5 + np.array([-2.0, 0.0])
        b = rng.standard_normal((n_per, 2)) * 0.5 + np.array([2.0, 1.0])
        return np.vstack([a, b])

    def test_labels_give_per_label_moments(self):
        rng = np.random.default_rng(6)
        y = self._two_state_series(rng)
        data = window_series(y, WindowConfig(n=4, delta=9))
        labels = (np.arange(len(data)) >= len(data) // 2).astype(int)
        params = initialize(data, 2, labels=labels)
        idx0 = labels == 0
        np.testing.assert_allclose(
            params.theta.means[0], data.means[idx0].mean(axis=0), atol=1e-12
        )

    def test_default_initializer_finds_clusters(self):
        rng = np.random.default_rng(7)
        y = self._two_state_series(rng)
        data = window_series(y, WindowConfig(n=4, delta=9))
        params = initialize(data, 2, seed=0)
        means = params.theta.means[np.argsort(params.theta.means[:, 0])]
        np.testing.assert_allclose(means[0], [-2.0, 0.0], atol=0.3)
        np.testing.assert_allclose(means[1], [2.0, 1.0], atol=0.3)

    def test_gammas_start_at_clamp_and_x0_uniform(self):
        rng = np.random.default_rng(8)
        y = self._two_state_series(rng)
        data = window_series(y, WindowConfig(n=4, delta=9))
        params = initialize(data, 2)
        assert np.all(params.seq.gammas == GAMMA_EPS)
        np.testing.assert_allclose(params.seq.x0, 0.5)
        np.testing.assert_allclose(params.hyper.w, 0.5)
        np.testing.assert_allclose(params.hyper.a1, 10.0)
        np.testing.assert_allclose(params.hyper.b1, 20.0)

    def test_sigma0_on_unit_variance_data(self):
        rng = np.random.default_rng(9)
        y = rng.standard_normal((2000, 2))
        data = window_series(y, WindowConfig(n=4, delta=9))
        params = initialize(data, 2, samples=y, seed=0)
        assert params.prior.sigma0 == pytest.approx(1.0, abs=0.15)

    def test_excess_states_warns_and_proceeds(self):
        rng = np.random.default_rng(10)
        y = rng.standard_normal((120, 1)) * 0.01
        data = window_series(y, WindowConfig(n=2, delta=5))
        labels = np.zeros(len(data), dtype=int)
        with pytest.warns(RuntimeWarning, match="no windows"):
            params = initialize(data, 3, labels=labels)
        assert params.theta.n_states == 3


# ---------------------------------------------------------------------------
# Full fit
# ---------------------------------------------------------------------------


def quick_fit_config(**kw):
    defaults = dict(
        eta_outer=0.05,
        max_outer=10,
        adam_max_steps=60,
        adam_sweep=10,
        eta_inner=0.05,
        line_search=LineSearchConfig(max_sweeps=50),
    )
    defaults.update(kw)
    return FitConfig(**defaults)


class TestFit:
    def _series(self, rng, flip=False):
        a = rng.standard_normal((400, 2)) * 0.4 + np.array([-2.0, 0.0])
        b = rng.standard_normal((400, 2)) * 0.6 + np.array([2.0, 1.0])
        parts = [b, a] if flip else [a, b]
        return np.vstack(parts)

    def test_cost_trace_monotone_and_report_complete(self):
        rng = np.random.default_rng(11)
        y = self._series(rng)
        data = window_series(y, WindowConfig(n=9, delta=19))
        report = fit(data, 2, cfg=ObjectiveConfig(lam=50.0), fit_cfg=quick_fit_config(), seed=0)
        trace = np.asarray(report.cost_trace)
        assert len(trace) >= 2
        assert np.all(np.diff(trace) <= 1e-9)
        assert report.trajectory.shape == (len(data), 2)
        np.testing.assert_allclose(report.trajectory.sum(axis=1), 1.0, atol=1e-9)
        assert report.barycenter_covs.shape == (len(data), 2, 2)

    def test_seeded_runs_bit_identical(self):
        rng = np.random.default_rng(12)
        y = self._series(rng)
        data = window_series(y, WindowConfig(n=9, delta=19))
        r1 = fit(data, 2, fit_cfg=quick_fit_config(max_outer=3), seed=5)
        r2 = fit(data, 2, fit_cfg=quick_fit_config(max_outer=3), seed=5)
        assert r1.cost_trace == r2.cost_trace
        np.testing.assert_array_equal(r1.theta.means, r2.theta.means)
        np.testing.assert_array_equal(r1.theta.covs, r2.theta.covs)
        np.testing.assert_array_equal(r1.seq.gammas, r2.seq.gammas)
        np.testing.assert_array_equal(r1.trajectory, r2.trajectory)

    def test_constraints_hold_after_fit(self):
        rng = np.random.default_rng(13)
        y = self._series(rng)
        data = window_series(y, WindowConfig(n=9, delta=19))
        report = fit(data, 2, fit_cfg=quick_fit_config(max_outer=4), seed=1)
        g = report.seq.gammas
        assert np.all(g >= GAMMA_EPS) and np.all(g <= 1.0 - GAMMA_EPS)
        h = report.hyper
        assert np.all((h.w >= 0.01) & (h.w <= 0.99))
        assert np.all(h.a1 >= 1.1)
        assert np.all(h.a1 / (h.a1 + h.b1) >= 0.15 - 1e-12)

    def test_single_state_degenerate(self):
        rng = np.random.default_rng(14)
        y = rng.standard_normal((300, 2)) * 0.7 + 1.0
        data = window_series(y, WindowConfig(n=9, delta=19))
        report = fit(data, 1, fit_cfg=quick_fit_config(max_outer=3), seed=0)
        pooled_mean = data.means.mean(axis=0)
        np.testing.assert_allclose(report.theta.means[0], pooled_mean, atol=0.2)
        np.testing.assert_allclose(report.trajectory, 1.0)

    def test_permutation_equivariance_of_label_init(self):
        rng = np.random.default_rng(15)
        y = self._series(rng)
        data = window_series(y, WindowConfig(n=9, delta=19))
        labels = (np.arange(len(data)) >= len(data) // 2).astype(int)
        r_a = fit(data, 2, fit_cfg=quick_fit_config(max_outer=2), seed=3, labels=labels)
        r_b = fit(data, 2, fit_cfg=quick_fit_config(max_outer=2), seed=3, labels=1 - labels)
        np.testing.assert_allclose(r_a.theta.means, r_b.theta.means[::-1], atol=1e-6)
        np.testing.assert_allclose(r_a.trajectory, r_b.trajectory[:, ::-1], atol=1e-6)

    def test_gmm_mode_fit_runs(self):
        rng = np.random.default_rng(16)
        y = self._series(rng)
        data = window_series(y, WindowConfig(n=9, delta=19))
        report = fit(
            data,
            2,
            cfg=ObjectiveConfig(lam=50.0, interpolation=Interpolation.GMM_LINEAR),
            fit_cfg=quick_fit_config(max_outer=3),
            seed=0,
        )
        assert np.all(np.diff(report.cost_trace) <= 1e-9)
