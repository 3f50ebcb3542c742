# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: small-matrix eigensolves, the barycenter fixed point
with its adjoint, batched Bures distances, and an exact network-simplex
transport solver that computes squared-Euclidean costs on the fly (no cost
matrix is ever materialized).

Mirrors the callable surface of ``dwb._kernels_np``; ``dwb._backend`` picks
whichever is available.  Intended for matrix dimensions up to ~32, where
per-call LAPACK overhead dominates the NumPy path.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset

cnp.import_array()

BACKEND_NAME = "ext"

cdef double EIG_CLAMP = 1e-12
cdef double GAP_EPS = 1e-10


# ---------------------------------------------------------------------------
# Small dense helpers (row-major d x d)
# ---------------------------------------------------------------------------


cdef inline void mat_mul(const double* a, const double* b, double* c, int d) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[i * d + k] * b[k * d + j]
            c[i * d + j] = acc


cdef inline void sym_inplace(double* a, int d) noexcept nogil:
    cdef int i, j
    cdef double v
    for i in range(d):
        for j in range(i + 1, d):
            v = 0.5 * (a[i * d + j] + a[j * d + i])
            a[i * d + j] = v
            a[j * d + i] = v


cdef inline double frob_dot(const double* a, const double* b, int d) noexcept nogil:
    cdef int i
    cdef double acc = 0.0
    for i in range(d * d):
        acc += a[i] * b[i]
    return acc


cdef void jacobi_eigh(double* a, double* lam, double* u, int d) noexcept nogil:
    """Cyclic Jacobi on symmetric a (destroyed); eigenvalues ascending."""
    cdef int i, j, p, q, r, sweep, best
    cdef double apq, app, aqq, tau, t, c, s, tmp1, tmp2, off, frob
    for i in range(d):
        for j in range(d):
            u[i * d + j] = 1.0 if i == j else 0.0
    if d == 1:
        lam[0] = a[0]
        return
    frob = frob_dot(a, a, d)
    for sweep in range(40):
        off = 0.0
        for p in range(d):
            for q in range(p + 1, d):
                off += a[p * d + q] * a[p * d + q]
        if off <= 1e-26 * (frob + 1e-300):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p * d + q]
                if fabs(apq) <= 1e-300:
                    continue
                app = a[p * d + p]
                aqq = a[q * d + q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for r in range(d):
                    tmp1 = a[r * d + p]
                    tmp2 = a[r * d + q]
                    a[r * d + p] = c * tmp1 - s * tmp2
                    a[r * d + q] = s * tmp1 + c * tmp2
                for r in range(d):
                    tmp1 = a[p * d + r]
                    tmp2 = a[q * d + r]
                    a[p * d + r] = c * tmp1 - s * tmp2
                    a[q * d + r] = s * tmp1 + c * tmp2
                for r in range(d):
                    tmp1 = u[r * d + p]
                    tmp2 = u[r * d + q]
                    u[r * d + p] = c * tmp1 - s * tmp2
                    u[r * d + q] = s * tmp1 + c * tmp2
    for i in range(d):
        lam[i] = a[i * d + i]
    # Selection sort ascending, swapping eigenvector columns along.
    for i in range(d - 1):
        best = i
        for j in range(i + 1, d):
            if lam[j] < lam[best]:
                best = j
        if best != i:
            tmp1 = lam[i]
            lam[i] = lam[best]
            lam[best] = tmp1
            for r in range(d):
                tmp2 = u[r * d + i]
                u[r * d + i] = u[r * d + best]
                u[r * d + best] = tmp2


cdef inline void recompose(const double* u, const double* f, double* out, int d) noexcept nogil:
    """out = U diag(f) U^T."""
    cdef int i, j, k
    cdef double acc
    for i in range(d):
        for j in range(i, d):
            acc = 0.0
            for k in range(d):
                acc += u[i * d + k] * f[k] * u[j * d + k]
            out[i * d + j] = acc
            out[j * d + i] = acc


cdef void dk_adjoint(const double* lam, const double* u, int which, const double* xbar,
                     double* out, int d, double* t1, double* t2) noexcept nogil:
    """Adjoint of the spectral map (0: sqrt, 1: inverse sqrt) applied to xbar."""
    cdef int i, j, k
    cdef double li, lj, fi, fj, fpi, fpj, den, scale, acc
    # t1 = U^T sym(xbar) U, built in two passes via t2 = sym(xbar) U.
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += 0.5 * (xbar[i * d + k] + xbar[k * d + i]) * u[k * d + j]
            t2[i * d + j] = acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += u[k * d + i] * t2[k * d + j]
            t1[i * d + j] = acc
    # Loewner scaling.
    for i in range(d):
        li = lam[i] if lam[i] > EIG_CLAMP else EIG_CLAMP
        fi = sqrt(li) if which == 0 else 1.0 / sqrt(li)
        fpi = 0.5 / sqrt(li) if which == 0 else -0.5 / (li * sqrt(li))
        for j in range(d):
            lj = lam[j] if lam[j] > EIG_CLAMP else EIG_CLAMP
            fj = sqrt(lj) if which == 0 else 1.0 / sqrt(lj)
            fpj = 0.5 / sqrt(lj) if which == 0 else -0.5 / (lj * sqrt(lj))
            den = lam[i] - lam[j]
            scale = fabs(lam[i])
            if fabs(lam[j]) > scale:
                scale = fabs(lam[j])
            if scale < 1.0:
                scale = 1.0
            if fabs(den) < GAP_EPS * scale:
                t1[i * d + j] *= 0.5 * (fpi + fpj)
            else:
                t1[i * d + j] *= (fi - fj) / den
    # out = U t1 U^T.
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += u[i * d + k] * t1[k * d + j]
            t2[i * d + j] = acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += t2[i * d + k] * u[j * d + k]
            out[i * d + j] = acc


# ---------------------------------------------------------------------------
# Batched eigendecomposition (exposed for parity tests)
# ---------------------------------------------------------------------------


def eigh_batch(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    shape = a.shape
    cdef int d = a.shape[a.ndim - 1]
    flat = a.reshape(-1, d, d).copy()
    cdef double[:, :, ::1] av = flat
    lam = np.empty((flat.shape[0], d))
    u = np.empty_like(flat)
    cdef double[:, ::1] lamv = lam
    cdef double[:, :, ::1] uv = u
    cdef Py_ssize_t b
    with nogil:
        for b in range(av.shape[0]):
            jacobi_eigh(&av[b, 0, 0], &lamv[b, 0], &uv[b, 0, 0], d)
    return lam.reshape(shape[:-1]), u.reshape(shape)


# ---------------------------------------------------------------------------
# Barycenter fixed point
# ---------------------------------------------------------------------------


cdef class FixpointStash:
    cdef public object lam_s, u_s, r, rinv, lam_n, u_n, m, p
    cdef public int iters

    @property
    def is_ext(self):
        return True


cdef void _sqrt_pair(const double* lam, double* fs, double* fi, int d) noexcept nogil:
    cdef int i
    cdef double v
    for i in range(d):
        v = lam[i] if lam[i] > EIG_CLAMP else EIG_CLAMP
        fs[i] = sqrt(v)
        fi[i] = 1.0 / fs[i]


def barycenter_cov_fixpoint(weights, covs, int iters, bint want_stash=False,
                            bint want_residual=False):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    covs = np.ascontiguousarray(covs, dtype=np.float64)
    cdef double[:, ::1] w = weights
    cdef double[:, :, ::1] c = covs
    cdef int nb = w.shape[0], nk = w.shape[1], d = c.shape[1]
    cdef int dd = d * d

    s_out = np.empty((nb, d, d))
    cdef double[:, :, ::1] sv = s_out

    cdef FixpointStash stash = None
    cdef double[:, :, ::1] st_lam_s
    cdef double[:, :, :, ::1] st_u_s, st_r, st_rinv, st_p
    cdef double[:, :, :, ::1] st_lam_n
    cdef double[:, :, :, :, ::1] st_u_n, st_m
    cdef bint keep = want_stash
    if want_stash:
        stash = FixpointStash()
        stash.iters = iters
        stash.lam_s = np.empty((iters, nb, d))
        stash.u_s = np.empty((iters, nb, d, d))
        stash.r = np.empty((iters, nb, d, d))
        stash.rinv = np.empty((iters, nb, d, d))
        stash.lam_n = np.empty((iters, nb, nk, d))
        stash.u_n = np.empty((iters, nb, nk, d, d))
        stash.m = np.empty((iters, nb, nk, d, d))
        stash.p = np.empty((iters, nb, d, d))
        st_lam_s = stash.lam_s
        st_u_s = stash.u_s
        st_r = stash.r
        st_rinv = stash.rinv
        st_lam_n = stash.lam_n
        st_u_n = stash.u_n
        st_m = stash.m
        st_p = stash.p

    resid_arr = np.empty(nb) if want_residual else None
    cdef double[::1] residv
    cdef bint do_resid = want_residual
    if want_residual:
        residv = resid_arr

    cdef double* work = <double*> malloc(sizeof(double) * (10 * dd + 4 * d))
    if work == NULL:
        raise MemoryError()
    cdef double* s = work
    cdef double* scratch = work + dd
    cdef double* lam = work + 2 * dd
    cdef double* u = work + 2 * dd + d
    cdef double* rr = work + 3 * dd + d
    cdef double* ri = work + 4 * dd + d
    cdef double* nmat = work + 5 * dd + d
    cdef double* mmat = work + 6 * dd + d
    cdef double* pmat = work + 7 * dd + d
    cdef double* t1 = work + 8 * dd + d
    cdef double* t2 = work + 9 * dd + d
    cdef double* fs = work + 10 * dd + d
    cdef double* fi = work + 10 * dd + 2 * d
    cdef double* lam_n_buf = work + 10 * dd + 3 * d

    cdef Py_ssize_t b
    cdef int it, k, i, wk
    cdef double acc, diff

    with nogil:
        for b in range(nb):
            # S_0 = sum_k w_k C_k
            memset(s, 0, sizeof(double) * dd)
            for k in range(nk):
                for i in range(dd):
                    s[i] += w[b, k] * (&c[k, 0, 0])[i]
            for it in range(iters):
                memcpy(scratch, s, sizeof(double) * dd)
                jacobi_eigh(scratch, lam, u, d)
                _sqrt_pair(lam, fs, fi, d)
                recompose(u, fs, rr, d)
                recompose(u, fi, ri, d)
                if keep:
                    memcpy(&st_lam_s[it, b, 0], lam, sizeof(double) * d)
                    memcpy(&st_u_s[it, b, 0, 0], u, sizeof(double) * dd)
                    memcpy(&st_r[it, b, 0, 0], rr, sizeof(double) * dd)
                    memcpy(&st_rinv[it, b, 0, 0], ri, sizeof(double) * dd)
                memset(pmat, 0, sizeof(double) * dd)
                for k in range(nk):
                    mat_mul(rr, &c[k, 0, 0], t1, d)
                    mat_mul(t1, rr, nmat, d)
                    sym_inplace(nmat, d)
                    jacobi_eigh(nmat, lam_n_buf, t2, d)
                    for i in range(d):
                        fs[i] = sqrt(lam_n_buf[i] if lam_n_buf[i] > EIG_CLAMP else EIG_CLAMP)
                    recompose(t2, fs, mmat, d)
                    if keep:
                        memcpy(&st_lam_n[it, b, k, 0], lam_n_buf, sizeof(double) * d)
                        memcpy(&st_u_n[it, b, k, 0, 0], t2, sizeof(double) * dd)
                        memcpy(&st_m[it, b, k, 0, 0], mmat, sizeof(double) * dd)
                    for i in range(dd):
                        pmat[i] += w[b, k] * mmat[i]
                if keep:
                    memcpy(&st_p[it, b, 0, 0], pmat, sizeof(double) * dd)
                # S <- Rinv P P Rinv
                mat_mul(ri, pmat, t1, d)
                mat_mul(t1, pmat, t2, d)
                mat_mul(t2, ri, s, d)
                sym_inplace(s, d)
            memcpy(&sv[b, 0, 0], s, sizeof(double) * dd)
            if do_resid:
                # One more sweep into scratch buffers; Frobenius difference.
                memcpy(scratch, s, sizeof(double) * dd)
                jacobi_eigh(scratch, lam, u, d)
                _sqrt_pair(lam, fs, fi, d)
                recompose(u, fs, rr, d)
                recompose(u, fi, ri, d)
                memset(pmat, 0, sizeof(double) * dd)
                for k in range(nk):
                    mat_mul(rr, &c[k, 0, 0], t1, d)
                    mat_mul(t1, rr, nmat, d)
                    sym_inplace(nmat, d)
                    jacobi_eigh(nmat, lam_n_buf, t2, d)
                    for i in range(d):
                        fs[i] = sqrt(lam_n_buf[i] if lam_n_buf[i] > EIG_CLAMP else EIG_CLAMP)
                    recompose(t2, fs, mmat, d)
                    for i in range(dd):
                        pmat[i] += w[b, k] * mmat[i]
                mat_mul(ri, pmat, t1, d)
                mat_mul(t1, pmat, t2, d)
                mat_mul(t2, ri, nmat, d)
                sym_inplace(nmat, d)
                acc = 0.0
                for i in range(dd):
                    diff = nmat[i] - s[i]
                    acc += diff * diff
                residv[b] = sqrt(acc)
    free(work)
    return s_out, resid_arr, stash


def barycenter_cov_backward(weights, covs, FixpointStash stash, sbar):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    covs = np.ascontiguousarray(covs, dtype=np.float64)
    sbar = np.ascontiguousarray(sbar, dtype=np.float64)
    cdef double[:, ::1] w = weights
    cdef double[:, :, ::1] c = covs
    cdef double[:, :, ::1] sb = sbar
    cdef int nb = w.shape[0], nk = w.shape[1], d = c.shape[1]
    cdef int dd = d * d
    cdef int iters = stash.iters

    wbar = np.zeros((nb, nk))
    cbar = np.zeros((nk, d, d))
    cdef double[:, ::1] wb = wbar
    cdef double[:, :, ::1] cb = cbar

    cdef double[:, :, ::1] st_lam_s = stash.lam_s
    cdef double[:, :, :, ::1] st_u_s = stash.u_s
    cdef double[:, :, :, ::1] st_r = stash.r
    cdef double[:, :, :, ::1] st_rinv = stash.rinv
    cdef double[:, :, :, ::1] st_lam_n = stash.lam_n
    cdef double[:, :, :, :, ::1] st_u_n = stash.u_n
    cdef double[:, :, :, :, ::1] st_m = stash.m
    cdef double[:, :, :, ::1] st_p = stash.p

    cdef double* work = <double*> malloc(sizeof(double) * (12 * dd))
    if work == NULL:
        raise MemoryError()
    cdef double* a = work
    cdef double* wmid = work + dd
    cdef double* pbar = work + 2 * dd
    cdef double* pp = work + 3 * dd
    cdef double* rinvbar = work + 4 * dd
    cdef double* rbar = work + 5 * dd
    cdef double* mbar = work + 6 * dd
    cdef double* nbar = work + 7 * dd
    cdef double* t1 = work + 8 * dd
    cdef double* t2 = work + 9 * dd
    cdef double* t3 = work + 10 * dd
    cdef double* t4 = work + 11 * dd

    cdef Py_ssize_t b
    cdef int it, k, i
    cdef const double* rr
    cdef const double* ri
    cdef const double* pm
    cdef const double* mm

    with nogil:
        for b in range(nb):
            for i in range(dd):
                a[i] = (&sb[b, 0, 0])[i]
            sym_inplace(a, d)
            for it in range(iters - 1, -1, -1):
                rr = &st_r[it, b, 0, 0]
                ri = &st_rinv[it, b, 0, 0]
                pm = &st_p[it, b, 0, 0]
                # W = Rinv A Rinv; Pbar = W P + P W; PP = P P
                mat_mul(ri, a, t1, d)
                mat_mul(t1, ri, wmid, d)
                mat_mul(wmid, pm, t1, d)
                mat_mul(pm, wmid, t2, d)
                for i in range(dd):
                    pbar[i] = t1[i] + t2[i]
                mat_mul(pm, pm, pp, d)
                # Rinvbar = sym(A Rinv PP + PP Rinv A)
                mat_mul(a, ri, t1, d)
                mat_mul(t1, pp, t2, d)
                mat_mul(pp, ri, t1, d)
                mat_mul(t1, a, t3, d)
                for i in range(dd):
                    rinvbar[i] = t2[i] + t3[i]
                sym_inplace(rinvbar, d)
                memset(rbar, 0, sizeof(double) * dd)
                for k in range(nk):
                    mm = &st_m[it, b, k, 0, 0]
                    wb[b, k] += frob_dot(mm, pbar, d)
                    for i in range(dd):
                        mbar[i] = w[b, k] * pbar[i]
                    dk_adjoint(&st_lam_n[it, b, k, 0], &st_u_n[it, b, k, 0, 0], 0,
                               mbar, nbar, d, t1, t2)
                    # cbar_k += R Nbar R
                    mat_mul(rr, nbar, t1, d)
                    mat_mul(t1, rr, t2, d)
                    for i in range(dd):
                        (&cb[k, 0, 0])[i] += t2[i]
                    # Rbar += Nbar R C_k + C_k R Nbar
                    mat_mul(nbar, rr, t1, d)
                    mat_mul(t1, &c[k, 0, 0], t2, d)
                    mat_mul(&c[k, 0, 0], rr, t1, d)
                    mat_mul(t1, nbar, t3, d)
                    for i in range(dd):
                        rbar[i] += t2[i] + t3[i]
                sym_inplace(rbar, d)
                dk_adjoint(&st_lam_s[it, b, 0], &st_u_s[it, b, 0, 0], 0, rbar, t3, d, t1, t2)
                dk_adjoint(&st_lam_s[it, b, 0], &st_u_s[it, b, 0, 0], 1, rinvbar, t4, d, t1, t2)
                for i in range(dd):
                    a[i] = t3[i] + t4[i]
            # S_0 = sum_k w_k C_k
            for k in range(nk):
                for i in range(dd):
                    (&cb[k, 0, 0])[i] += w[b, k] * a[i]
                wb[b, k] += frob_dot(&c[k, 0, 0], a, d)
    free(work)
    return wbar, cbar


# ---------------------------------------------------------------------------
# Bures distance against fixed references
# ---------------------------------------------------------------------------


cdef class BuresStash:
    cdef public object lam, u

    @property
    def is_ext(self):
        return True


def bures_sq_fixed(ref_sqrt, ref_trace, s, bint want_stash=False):
    s = np.ascontiguousarray(s, dtype=np.float64)
    cdef int d = s.shape[s.ndim - 1]
    batch = s.shape[:-2]
    s2 = s.reshape(-1, d, d)
    ref = np.ascontiguousarray(
        np.broadcast_to(np.asarray(ref_sqrt, dtype=np.float64), s.shape).reshape(-1, d, d)
    )
    tr = np.ascontiguousarray(
        np.broadcast_to(np.asarray(ref_trace, dtype=np.float64), batch).reshape(-1)
    )
    cdef const double[:, :, ::1] sv = s2
    cdef const double[:, :, ::1] rv = ref
    cdef const double[::1] trv = tr
    cdef Py_ssize_t nb = sv.shape[0]
    vals = np.empty(nb)
    cdef double[::1] valv = vals
    cdef BuresStash stash = None
    cdef double[:, ::1] lamv
    cdef double[:, :, ::1] uv
    cdef bint keep = want_stash
    if want_stash:
        stash = BuresStash()
        stash.lam = np.empty((nb, d))
        stash.u = np.empty((nb, d, d))
        lamv = stash.lam
        uv = stash.u
    cdef double* work = <double*> malloc(sizeof(double) * (3 * d * d + 2 * d))
    if work == NULL:
        raise MemoryError()
    cdef double* xm = work
    cdef double* t1 = work + d * d
    cdef double* u = work + 2 * d * d
    cdef double* lam = work + 3 * d * d
    cdef Py_ssize_t b
    cdef int i
    cdef double acc, trs, v
    with nogil:
        for b in range(nb):
            mat_mul(&rv[b, 0, 0], &sv[b, 0, 0], t1, d)
            mat_mul(t1, &rv[b, 0, 0], xm, d)
            sym_inplace(xm, d)
            jacobi_eigh(xm, lam, u, d)
            if keep:
                memcpy(&lamv[b, 0], lam, sizeof(double) * d)
                memcpy(&uv[b, 0, 0], u, sizeof(double) * d * d)
            acc = 0.0
            trs = 0.0
            for i in range(d):
                v = lam[i] if lam[i] > EIG_CLAMP else EIG_CLAMP
                acc += sqrt(v)
                trs += sv[b, i, i]
            valv[b] = trv[b] + trs - 2.0 * acc
    free(work)
    return vals.reshape(batch), stash


def bures_sq_fixed_backward(ref_sqrt, BuresStash stash, seed):
    lam_arr = stash.lam
    u_arr = stash.u
    cdef double[:, ::1] lamv = lam_arr
    cdef double[:, :, ::1] uv = u_arr
    cdef Py_ssize_t nb = lamv.shape[0]
    cdef int d = lamv.shape[1]
    batch_shape = np.asarray(seed).shape
    ref = np.ascontiguousarray(
        np.broadcast_to(np.asarray(ref_sqrt, dtype=np.float64), batch_shape + (d, d)).reshape(-1, d, d)
    )
    sd = np.ascontiguousarray(np.asarray(seed, dtype=np.float64).reshape(-1))
    cdef const double[:, :, ::1] rv = ref
    cdef const double[::1] sdv = sd
    out = np.empty((nb, d, d))
    cdef double[:, :, ::1] ov = out
    cdef double* work = <double*> malloc(sizeof(double) * (3 * d * d + d))
    if work == NULL:
        raise MemoryError()
    cdef double* xih = work
    cdef double* t1 = work + d * d
    cdef double* t2 = work + 2 * d * d
    cdef double* fi = work + 3 * d * d
    cdef Py_ssize_t b
    cdef int i, j
    cdef double v
    with nogil:
        for b in range(nb):
            for i in range(d):
                v = lamv[b, i] if lamv[b, i] > EIG_CLAMP else EIG_CLAMP
                fi[i] = 1.0 / sqrt(v)
            recompose(&uv[b, 0, 0], fi, xih, d)
            mat_mul(&rv[b, 0, 0], xih, t1, d)
            mat_mul(t1, &rv[b, 0, 0], t2, d)
            for i in range(d):
                for j in range(d):
                    ov[b, i, j] = sdv[b] * ((1.0 if i == j else 0.0) - t2[i * d + j])
    free(work)
    return out.reshape(batch_shape + (d, d))


# ---------------------------------------------------------------------------
# Network simplex for squared-Euclidean transport
# ---------------------------------------------------------------------------


cdef inline double arc_cost(const double* xs, const double* ys, int i, int j, int d) noexcept nogil:
    cdef int l
    cdef double acc = 0.0, diff
    for l in range(d):
        diff = xs[i * d + l] - ys[j * d + l]
        acc += diff * diff
    return acc


def emd_sqeuclidean(x, y, wx, wy, double block_scale=0.5):
    """Exact optimal transport between weighted clouds, squared-Euclidean cost.

    Primal network simplex on the implicit complete bipartite graph; the
    cost of an arc is recomputed from the coordinates whenever needed, so
    memory stays O(n + m).  Returns (cost, rows, cols, vals) of an optimal
    basic plan.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    wxa = np.ascontiguousarray(wx, dtype=np.float64)
    wya = np.ascontiguousarray(wy, dtype=np.float64)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] yv = y
    cdef double[::1] av = wxa
    cdef double[::1] bv = wya
    cdef int n = xv.shape[0], m = yv.shape[0], d = xv.shape[1]
    cdef int nn = n + m

    parent_arr = np.full(nn, -1, dtype=np.int32)
    pflow_arr = np.zeros(nn)
    pot_arr = np.zeros(nn)
    succ_arr = np.ones(nn, dtype=np.int64)
    first_child_arr = np.full(nn, -1, dtype=np.int32)
    next_sib_arr = np.full(nn, -1, dtype=np.int32)
    prev_sib_arr = np.full(nn, -1, dtype=np.int32)
    stack_arr = np.empty(nn, dtype=np.int32)
    path_arr = np.empty(nn, dtype=np.int32)
    oldflow_arr = np.empty(nn)
    oldsucc_arr = np.empty(nn, dtype=np.int64)

    cdef int[::1] parent = parent_arr
    cdef double[::1] pflow = pflow_arr
    cdef double[::1] pot = pot_arr
    cdef long long[::1] succ = succ_arr
    cdef int[::1] first_child = first_child_arr
    cdef int[::1] next_sib = next_sib_arr
    cdef int[::1] prev_sib = prev_sib_arr
    cdef int[::1] stack = stack_arr
    cdef int[::1] path = path_arr
    cdef double[::1] oldflow = oldflow_arr
    cdef long long[::1] oldsucc = oldsucc_arr

    cdef const double* xs = &xv[0, 0]
    cdef const double* ys = &yv[0, 0]

    cdef int i, j, node, child, par, top
    cdef double arem, brem, f
    cdef bint i_in_tree

    # --- Northwest-corner initial basis (a caterpillar spanning tree) ---
    i = 0
    j = 0
    arem = av[0]
    brem = bv[0]
    parent[0] = -1
    while True:
        f = arem if arem < brem else brem
        if f < 0.0:
            f = 0.0
        if i == 0 and j == 0:
            parent[n] = 0
            pflow[n] = f
        else:
            # Exactly one endpoint of the new arc is new to the tree.
            i_in_tree = (i == 0) or (parent[i] != -1)
            if i_in_tree and parent[n + j] == -1:
                child = n + j
                par = i
            else:
                child = i
                par = n + j
            parent[child] = par
            pflow[child] = f
        arem -= f
        brem -= f
        if i == n - 1 and j == m - 1:
            break
        if (arem <= brem or j == m - 1) and i < n - 1:
            i += 1
            arem = av[i]
        else:
            j += 1
            brem = bv[j]

    # Children lists from the parent array.
    for node in range(1, nn):
        par = parent[node]
        next_sib[node] = first_child[par]
        if first_child[par] != -1:
            prev_sib[first_child[par]] = node
        first_child[par] = node
        prev_sib[node] = -1

    # Potentials via DFS from the root (pot[src] + pot[snk] = cost on tree
    # arcs); the preorder is kept to accumulate subtree sizes in one sweep.
    order_arr = np.empty(nn, dtype=np.int32)
    cdef int[::1] order = order_arr
    cdef int n_order = 0
    top = 0
    stack[0] = 0
    pot[0] = 0.0
    cdef int cur
    while top >= 0:
        cur = stack[top]
        top -= 1
        order[n_order] = cur
        n_order += 1
        child = first_child[cur]
        while child != -1:
            if child < n:
                pot[child] = arc_cost(xs, ys, child, cur - n, d) - pot[cur]
            else:
                pot[child] = arc_cost(xs, ys, cur, child - n, d) - pot[cur]
            top += 1
            stack[top] = child
            child = next_sib[child]
    for node in range(nn):
        succ[node] = 1
    for i in range(nn - 1, -1, -1):
        cur = order[i]
        if parent[cur] != -1:
            succ[parent[cur]] += succ[cur]

    # Rough cost scale for tolerances.
    cdef double cmax = 0.0, t
    for i in range(n):
        t = arc_cost(xs, ys, i, 0, d)
        if t > cmax:
            cmax = t
    for j in range(m):
        t = arc_cost(xs, ys, 0, j, d)
        if t > cmax:
            cmax = t
    cdef double tol = 1e-10 * (cmax + 1.0)

    cdef long long total_arcs = <long long> n * <long long> m
    cdef long long block = <long long> (block_scale * sqrt(<double> total_arcs)) + 1
    if block < 64:
        block = 64
    cdef long long next_arc = 0, scanned, a_id, end, max_pivots
    cdef double best_rc, rc, delta, sigma
    cdef long long best_arc
    cdef int eu, ev, au, bvx, wnode, side, sz_i
    cdef long long subtree_size
    cdef bint u_decrease, v_decrease
    max_pivots = 200 * <long long> nn + 100000

    cdef long long pivots = 0
    cdef int src, snk, px
    cdef double fl, psrc

    # Precompute the cost matrix when it fits comfortably (~240 MB); the
    # entering-arc scan is the hot loop and indexed reads beat recomputing
    # the cost.  Larger instances stay matrix-free.
    cdef const double* cmat = NULL
    cmat_arr = None
    if total_arcs <= 30_000_000:
        cmat_arr = (
            np.sum(x * x, axis=1)[:, None]
            + np.sum(y * y, axis=1)[None, :]
            - 2.0 * (x @ y.T)
        )
        np.maximum(cmat_arr, 0.0, out=cmat_arr)
        cmat_arr = np.ascontiguousarray(cmat_arr)
        cmat = <const double*> cnp.PyArray_DATA(cmat_arr)

    with nogil:
        while True:
            # --- entering arc: block search for the most negative reduced cost ---
            best_rc = -tol
            best_arc = -1
            scanned = 0
            while scanned < total_arcs:
                end = next_arc + block
                if end > total_arcs:
                    end = total_arcs
                a_id = next_arc
                src = <int> (a_id // m)
                snk = <int> (a_id % m)
                psrc = pot[src]
                if cmat != NULL:
                    while a_id < end:
                        rc = cmat[a_id] - psrc - pot[n + snk]
                        if rc < best_rc:
                            best_rc = rc
                            best_arc = a_id
                        a_id += 1
                        snk += 1
                        if snk == m:
                            snk = 0
                            src += 1
                            if src < n:
                                psrc = pot[src]
                else:
                    while a_id < end:
                        rc = arc_cost(xs, ys, src, snk, d) - psrc - pot[n + snk]
                        if rc < best_rc:
                            best_rc = rc
                            best_arc = a_id
                        a_id += 1
                        snk += 1
                        if snk == m:
                            snk = 0
                            src += 1
                            if src < n:
                                psrc = pot[src]
                scanned += end - next_arc
                next_arc = end if end < total_arcs else 0
                if best_arc >= 0:
                    break
            if best_arc < 0:
                break  # optimal
            pivots += 1
            if pivots > max_pivots:
                break
            eu = <int> (best_arc // m)          # entering source
            ev = n + <int> (best_arc % m)       # entering sink
            # --- apex of the cycle ---
            au = eu
            bvx = ev
            while au != bvx:
                if succ[au] < succ[bvx]:
                    au = parent[au]
                else:
                    bvx = parent[bvx]
            # au == bvx == apex
            # --- min ratio over decreasing arcs ---
            delta = 1e300
            wnode = -1
            side = 0
            cur = eu
            while cur != au:
                # source side: hop from a source decreases, from a sink increases
                u_decrease = cur < n
                if u_decrease:
                    fl = pflow[cur]
                    if fl < delta:
                        delta = fl
                        wnode = cur
                        side = 0
                cur = parent[cur]
            cur = ev
            while cur != au:
                v_decrease = cur >= n
                if v_decrease:
                    fl = pflow[cur]
                    if fl <= delta:
                        delta = fl
                        wnode = cur
                        side = 1
                cur = parent[cur]
            if wnode == -1:
                # Degenerate cycle with no decreasing arc cannot happen on a
                # bipartite alternating cycle; guard anyway.
                break
            # --- apply flow change ---
            cur = eu
            while cur != au:
                if cur < n:
                    pflow[cur] -= delta
                else:
                    pflow[cur] += delta
                cur = parent[cur]
            cur = ev
            while cur != au:
                if cur >= n:
                    pflow[cur] -= delta
                else:
                    pflow[cur] += delta
                cur = parent[cur]
            # --- tree surgery: re-root the cut side at the entering endpoint ---
            # Path from the entering endpoint down... (collect from endpoint up to wnode)
            if side == 0:
                cur = eu
            else:
                cur = ev
            sz_i = 0
            while True:
                path[sz_i] = cur
                oldflow[sz_i] = pflow[cur]
                oldsucc[sz_i] = succ[cur]
                if cur == wnode:
                    break
                cur = parent[cur]
                sz_i += 1
            subtree_size = succ[wnode]
            # Ancestor bookkeeping: remove the subtree from wnode's old chain.
            cur = parent[wnode]
            while cur != -1:
                succ[cur] -= subtree_size
                cur = parent[cur]
            # Detach every path node from its old parent's child list.
            for i in range(sz_i + 1):
                node = path[i]
                par = parent[node]
                if prev_sib[node] != -1:
                    next_sib[prev_sib[node]] = next_sib[node]
                else:
                    first_child[par] = next_sib[node]
                if next_sib[node] != -1:
                    prev_sib[next_sib[node]] = prev_sib[node]
            # Re-hang: path[0] (the entering endpoint) becomes the subtree root.
            if side == 0:
                par = ev
            else:
                par = eu
            parent[path[0]] = par
            pflow[path[0]] = delta
            next_sib[path[0]] = first_child[par]
            if first_child[par] != -1:
                prev_sib[first_child[par]] = path[0]
            first_child[par] = path[0]
            prev_sib[path[0]] = -1
            succ[path[0]] = subtree_size
            for i in range(1, sz_i + 1):
                node = path[i]
                par = path[i - 1]
                parent[node] = par
                pflow[node] = oldflow[i - 1]
                next_sib[node] = first_child[par]
                if first_child[par] != -1:
                    prev_sib[first_child[par]] = node
                first_child[par] = node
                prev_sib[node] = -1
                succ[node] = subtree_size - oldsucc[i - 1]
            # Ancestors of the attach point gain the subtree.
            cur = parent[path[0]]
            while cur != -1:
                succ[cur] += subtree_size
                cur = parent[cur]
            # --- potential shift over the re-hung subtree ---
            # best_rc is the entering arc's reduced cost.
            top = 0
            stack[0] = path[0]
            if side == 0:
                sigma = best_rc  # subtree holds the source endpoint
            else:
                sigma = -best_rc
            while top >= 0:
                cur = stack[top]
                top -= 1
                if cur < n:
                    pot[cur] += sigma
                else:
                    pot[cur] -= sigma
                child = first_child[cur]
                while child != -1:
                    top += 1
                    stack[top] = child
                    child = next_sib[child]

    if pivots > max_pivots:
        raise RuntimeError("network simplex exceeded its pivot budget")

    # Extract the plan from the tree arcs.
    rows_list = []
    cols_list = []
    vals_list = []
    cdef double total_cost = 0.0
    for node in range(nn):
        if node == 0 or parent[node] == -1:
            continue
        fl = pflow[node]
        if fl < 0.0:
            fl = 0.0
        if node < n:
            src = node
            snk = parent[node] - n
        else:
            src = parent[node]
            snk = node - n
        total_cost += fl * arc_cost(xs, ys, src, snk, d)
        if fl > 0.0:
            rows_list.append(src)
            cols_list.append(snk)
            vals_list.append(fl)
    return (
        total_cost,
        np.asarray(rows_list, dtype=np.int64),
        np.asarray(cols_list, dtype=np.int64),
        np.asarray(vals_list),
    )
