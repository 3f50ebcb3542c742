"""Finite-difference and identity checks for the batched SPD kernels.

These tests pin down the hand-derived adjoints of the barycenter fixed
point and the Bures distance before anything else is built on top of them.
"""

import numpy as np
import pytest

from dwb import _kernels_np as K


def random_spd(rng, d, lo=0.5, hi=1.5):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = rng.uniform(lo, hi, size=d)
    return (q * lam) @ q.T


def random_sym(rng, d):
    a = rng.standard_normal((d, d))
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# Matrix-function plumbing
# ---------------------------------------------------------------------------


class TestSpectralFunctions:
    def test_sqrt_squares_back(self):
        rng = np.random.default_rng(0)
        a = np.stack([random_spd(rng, 4) for _ in range(7)])
        r = K.spd_sqrt(a)
        np.testing.assert_allclose(r @ r, a, atol=1e-12)

    def test_sqrt_and_inv_are_inverses(self):
        rng = np.random.default_rng(1)
        a = np.stack([random_spd(rng, 5) for _ in range(3)])
        r, rinv = K.spd_sqrt_and_inv(a)
        eye = np.broadcast_to(np.eye(5), a.shape)
        np.testing.assert_allclose(r @ rinv, eye, atol=1e-12)

    def test_lyapunov_residual(self):
        rng = np.random.default_rng(2)
        for d in (2, 3, 8, 20):
            s = random_spd(rng, d)
            v = random_sym(rng, d)
            lam, u = np.linalg.eigh(s)
            sol = K.lyapunov_from_eigh(lam, u, v)
            resid = np.linalg.norm(sol @ s + s @ sol - v)
            assert resid < 1e-10

    def test_fn_adjoint_matches_fd(self):
        # <Xbar, d sqrt(A)[V]> must equal <adjoint(Xbar), V> for symmetric V.
        rng = np.random.default_rng(3)
        d = 4
        a = random_spd(rng, d)
        xbar = random_sym(rng, d)
        v = random_sym(rng, d)
        lam, u = np.linalg.eigh(a[None])
        adj = K._fn_adjoint(lam, u, K._sqrt_f, K._sqrt_fprime, xbar[None])[0]
        h = 1e-6
        dsqrt = (K.spd_sqrt((a + h * v)[None])[0] - K.spd_sqrt((a - h * v)[None])[0]) / (2 * h)
        lhs = np.sum(xbar * dsqrt)
        rhs = np.sum(adj * v)
        assert abs(lhs - rhs) < 1e-7 * max(1.0, abs(lhs))


# ---------------------------------------------------------------------------
# Barycenter fixed point
# ---------------------------------------------------------------------------


class TestFixpointForward:
    def test_vertex_weight_returns_component(self):
        rng = np.random.default_rng(4)
        covs = np.stack([random_spd(rng, 3) for _ in range(3)])
        w = np.array([[0.0, 1.0, 0.0]])
        s, resid, _ = K.barycenter_cov_fixpoint(w, covs, 10, want_residual=True)
        np.testing.assert_allclose(s[0], covs[1], atol=1e-10)
        assert resid[0] < 1e-10

    def test_scalar_case_matches_closed_form(self):
        # d=1: barycenter std is the weighted mean of component stds.
        covs = np.array([[[1.0]], [[9.0]]])
        w = np.array([[0.5, 0.5]])
        s, _, _ = K.barycenter_cov_fixpoint(w, covs, 30)
        assert abs(s[0, 0, 0] - 4.0) < 1e-10

    def test_commuting_case(self):
        covs = np.stack([np.diag([1.0, 4.0]), np.diag([9.0, 16.0])])
        w = np.array([[0.3, 0.7]])
        s, _, _ = K.barycenter_cov_fixpoint(w, covs, 30)
        expect = np.diag((0.3 * np.sqrt(np.diag(covs[0])) + 0.7 * np.sqrt(np.diag(covs[1]))) ** 2)
        np.testing.assert_allclose(s[0], expect, atol=1e-10)

    def test_stationarity_on_random_instances(self):
        rng = np.random.default_rng(5)
        for d, kk in ((2, 2), (4, 3), (10, 4)):
            covs = np.stack([random_spd(rng, d) for _ in range(kk)])
            w = rng.dirichlet(np.ones(kk), size=6)
            _, resid, _ = K.barycenter_cov_fixpoint(w, covs, 10, want_residual=True)
            assert np.all(resid < 1e-6)


class TestFixpointBackward:
    @pytest.mark.parametrize("d,kk,iters", [(2, 2, 3), (3, 3, 10), (4, 2, 10)])
    def test_matches_central_differences(self, d, kk, iters):
        rng = np.random.default_rng(6)
        covs = np.stack([random_spd(rng, d) for _ in range(kk)])
        w = rng.dirichlet(np.ones(kk) * 3.0, size=2)
        sbar = np.stack([random_sym(rng, d) for _ in range(2)])

        def value(wm, cm):
            s, _, _ = K.barycenter_cov_fixpoint(wm, cm, iters)
            return float(np.sum(sbar * s))

        s, _, stash = K.barycenter_cov_fixpoint(w, covs, iters, want_stash=True)
        wbar, cbar = K.barycenter_cov_backward(w, covs, stash, sbar)

        h = 1e-6
        for b in range(w.shape[0]):
            for k in range(kk):
                wp = w.copy()
                wp[b, k] += h
                wm = w.copy()
                wm[b, k] -= h
                fd = (value(wp, covs) - value(wm, covs)) / (2 * h)
                assert abs(fd - wbar[b, k]) < 2e-5 * max(1.0, abs(fd))

        for k in range(kk):
            for i in range(d):
                for j in range(i, d):
                    e = np.zeros((d, d))
                    e[i, j] = e[j, i] = 1.0
                    cp = covs.copy()
                    cp[k] += h * e
                    cm = covs.copy()
                    cm[k] -= h * e
                    fd = (value(w, cp) - value(w, cm)) / (2 * h)
                    got = float(np.sum(cbar[k] * e))
                    assert abs(fd - got) < 2e-5 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# Bures distance
# ---------------------------------------------------------------------------


class TestBures:
    def test_identity_case_is_zero(self):
        rng = np.random.default_rng(7)
        a = random_spd(rng, 5)
        root = K.spd_sqrt(a[None])[0]
        vals, _ = K.bures_sq_fixed(root, np.trace(a), a[None])
        assert abs(vals[0]) < 1e-10

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(8)
        d = 3
        a = random_spd(rng, d)
        s = random_spd(rng, d)
        root = K.spd_sqrt(a[None])[0]
        tra = np.trace(a)
        _, stash = K.bures_sq_fixed(root, tra, s[None], want_stash=True)
        grad = K.bures_sq_fixed_backward(root, stash, np.ones(1))[0]
        h = 1e-6
        for i in range(d):
            for j in range(i, d):
                e = np.zeros((d, d))
                e[i, j] = e[j, i] = 1.0
                vp, _ = K.bures_sq_fixed(root, tra, (s + h * e)[None])
                vm, _ = K.bures_sq_fixed(root, tra, (s - h * e)[None])
                fd = (vp[0] - vm[0]) / (2 * h)
                got = float(np.sum(grad * e))
                assert abs(fd - got) < 1e-6 * max(1.0, abs(fd))
