# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and status conventions as _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmax

cnp.import_array()

NAME = "compiled"


cdef int _house_qr(double[:, ::1] R, double[:, ::1] Q, double[:, ::1] V,
                   double[::1] betas, double[::1] signs, double tau) noexcept nogil:
    """In-place Householder QR of R (d x k).  Writes Q; returns -1 or the failing column."""
    cdef Py_ssize_t d = R.shape[0], k = R.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double fro = 0.0, alpha, x0, s, beta, dot
    for i in range(d):
        for j in range(k):
            fro += R[i, j] * R[i, j]
    fro = tau * sqrt(fro)
    for j in range(k):
        alpha = 0.0
        for i in range(j, d):
            alpha += R[i, j] * R[i, j]
        alpha = sqrt(alpha)
        if alpha <= fro or alpha == 0.0:
            return j
        x0 = R[j, j]
        s = 1.0 if x0 >= 0.0 else -1.0
        for i in range(j, d):
            V[i, j] = R[i, j]
        V[j, j] += s * alpha
        beta = 1.0 / (alpha * (alpha + fabs(x0)))
        betas[j] = beta
        signs[j] = -s
        for l in range(j, k):
            dot = 0.0
            for i in range(j, d):
                dot += V[i, j] * R[i, l]
            dot *= beta
            for i in range(j, d):
                R[i, l] -= dot * V[i, j]
    for i in range(d):
        for l in range(k):
            Q[i, l] = 1.0 if i == l else 0.0
    for j in range(k - 1, -1, -1):
        beta = betas[j]
        for l in range(k):
            dot = 0.0
            for i in range(j, d):
                dot += V[i, j] * Q[i, l]
            dot *= beta
            for i in range(j, d):
                Q[i, l] -= dot * V[i, j]
    for i in range(d):
        for l in range(k):
            Q[i, l] *= signs[l]
    return -1


def householder_qr(A, double tau):
    cdef double[:, ::1] R = np.array(A, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t d = R.shape[0], k = R.shape[1]
    Qa = np.empty((d, k))
    signs_a = np.empty(k)
    cdef double[:, ::1] Q = Qa
    cdef double[:, ::1] V = np.zeros((d, k))
    cdef double[::1] betas = np.empty(k)
    cdef double[::1] signs = signs_a
    cdef int fail
    with nogil:
        fail = _house_qr(R, Q, V, betas, signs, tau)
    if fail >= 0:
        return None, None, fail
    Rk = np.triu(np.asarray(R)[:k, :]) * signs_a[:, None]
    return Qa, Rk, -1


def jacobi_eigh(S, double tol, int max_sweeps):
    """Row-cyclic Jacobi.  Returns unsorted (eigenvalues, eigenvectors, sweeps)."""
    cdef double[:, ::1] A = np.array(S, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = A.shape[0]
    Va = np.eye(n)
    cdef double[:, ::1] V = Va
    cdef Py_ssize_t i, j, p, q
    cdef double scale = 0.0, off, diag, apq, theta, t, c, s, aip, aiq
    cdef int sweeps = 0
    with nogil:
        for i in range(n):
            for j in range(n):
                scale += A[i, j] * A[i, j]
        scale = sqrt(scale)
        while scale > 0.0 and sweeps < max_sweeps:
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += A[i, j] * A[i, j]
            if sqrt(off) < tol * scale:
                break
            sweeps += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                    else:
                        t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for i in range(n):
                        aip = A[i, p]
                        aiq = A[i, q]
                        A[i, p] = c * aip - s * aiq
                        A[i, q] = s * aip + c * aiq
                    for i in range(n):
                        aip = A[p, i]
                        aiq = A[q, i]
                        A[p, i] = c * aip - s * aiq
                        A[q, i] = s * aip + c * aiq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for i in range(n):
                        aip = V[i, p]
                        aiq = V[i, q]
                        V[i, p] = c * aip - s * aiq
                        V[i, q] = s * aip + c * aiq
    w = np.array([A[i, i] for i in range(n)])
    return w, Va, sweeps


cdef bint _gram_update(double[:, ::1] Lam, double[:, ::1] C, double[::1] c, double[::1] v,
                       double[::1] u, double[::1] a, double[::1] b, double tau) noexcept nogil:
    """In-place Woodbury update of Lam for C + c v^T (C is the old matrix)."""
    cdef Py_ssize_t d = C.shape[0], k = C.shape[1]
    cdef Py_ssize_t i, j
    cdef double s = 0.0, k11, k12, k21, k22, det, i11, i12, i21, i22, acc_a, acc_b
    for j in range(k):
        u[j] = 0.0
    for i in range(d):
        s += c[i] * c[i]
        for j in range(k):
            u[j] += C[i, j] * c[i]
    for i in range(k):
        acc_a = 0.0
        acc_b = 0.0
        for j in range(k):
            acc_a += Lam[i, j] * u[j]
            acc_b += Lam[i, j] * v[j]
        a[i] = acc_a
        b[i] = acc_b
    k11 = -s
    k12 = 1.0
    k21 = 1.0
    k22 = 0.0
    for i in range(k):
        k11 += u[i] * a[i]
        k12 += u[i] * b[i]
        k21 += v[i] * a[i]
        k22 += v[i] * b[i]
    # relative cancellation test, see _pykernels.gram_rank2_update
    det = k11 * k22 - k12 * k21
    if fabs(det) <= tau * fmax(fabs(k11 * k22), fabs(k12 * k21)):
        return False
    i11 = k22 / det
    i12 = -k12 / det
    i21 = -k21 / det
    i22 = k11 / det
    for i in range(k):
        for j in range(k):
            Lam[i, j] -= i11 * a[i] * a[j] + i12 * a[i] * b[j] + i21 * b[i] * a[j] + i22 * b[i] * b[j]
    return True


cdef bint _pinv_update(double[:, ::1] C, double[:, ::1] P, double[::1] c, double[::1] v,
                       double[::1] Pc, double[::1] w, double[::1] nvec, double[::1] Pn,
                       double tau) noexcept nogil:
    """In-place rank-1 pseudo-inverse update of P for C + c v^T (C is the old matrix)."""
    cdef Py_ssize_t d = C.shape[0], k = C.shape[1]
    cdef Py_ssize_t i, j
    cdef double beta = 1.0, ww = 0.0, cc = 0.0, nn = 0.0, acc, D, f1, f2, g1, g2
    for j in range(k):
        acc = 0.0
        for i in range(d):
            acc += P[j, i] * c[i]
        Pc[j] = acc
        beta += v[j] * acc
    for i in range(d):
        acc = 0.0
        for j in range(k):
            acc += C[i, j] * Pc[j]
        w[i] = c[i] - acc
        ww += w[i] * w[i]
        cc += c[i] * c[i]
        acc = 0.0
        for j in range(k):
            acc += P[j, i] * v[j]
        nvec[i] = acc
        nn += acc * acc
    if sqrt(ww) > tau * sqrt(cc):
        for j in range(k):
            acc = 0.0
            for i in range(d):
                acc += P[j, i] * nvec[i]
            Pn[j] = acc
        D = ww * nn + beta * beta
        f1 = beta / D
        f2 = ww / D
        g1 = nn / D
        g2 = beta / D
        for j in range(k):
            for i in range(d):
                P[j, i] += Pn[j] * (f1 * w[i] - f2 * nvec[i]) - Pc[j] * (g1 * w[i] + g2 * nvec[i])
        return True
    if fabs(beta) <= tau:
        return False
    for j in range(k):
        for i in range(d):
            P[j, i] -= Pc[j] * nvec[i] / beta
    return True


def gram_rank2_update(Lam, C, c, v, double tau):
    out = np.array(Lam, dtype=np.float64, order="C", copy=True)
    k = out.shape[0]
    Cc = np.ascontiguousarray(C, dtype=np.float64)
    cv = np.ascontiguousarray(c, dtype=np.float64)
    vv = np.ascontiguousarray(v, dtype=np.float64)
    if not _gram_update(out, Cc, cv, vv, np.empty(k), np.empty(k), np.empty(k), tau):
        return None
    return out


def pinv_rank1_update(C, P, c, v, double tau):
    out = np.array(P, dtype=np.float64, order="C", copy=True)
    k, d = out.shape
    Cc = np.ascontiguousarray(C, dtype=np.float64)
    cv = np.ascontiguousarray(c, dtype=np.float64)
    vv = np.ascontiguousarray(v, dtype=np.float64)
    if not _pinv_update(Cc, out, cv, vv, np.empty(k), np.empty(d), np.empty(d), np.empty(k), tau):
        return None
    return out


def stochastic_pass(double[:, ::1] C, double[:, ::1] inv, bint gram_mode, bint implicit,
                    const double[:, :] Y, double[::1] etas, double[::1] rates, double tau):
    cdef Py_ssize_t d = C.shape[0], k = C.shape[1], n_samples = Y.shape[1]
    cdef double[::1] x = np.empty(k), cvec = np.empty(d), z = np.empty(k)
    cdef double[::1] bk1 = np.empty(k), bk2 = np.empty(k), bd1 = np.empty(d), bd2 = np.empty(d)
    cdef Py_ssize_t t, i, j
    cdef double eta, rate, xx, acc
    cdef bint ok, failed = False
    cdef Py_ssize_t done = n_samples
    with nogil:
        for t in range(n_samples):
            eta = etas[t]
            if gram_mode:
                for j in range(k):
                    z[j] = 0.0
                for i in range(d):
                    for j in range(k):
                        z[j] += C[i, j] * Y[i, t]
                for j in range(k):
                    acc = 0.0
                    for i in range(k):
                        acc += inv[j, i] * z[i]
                    x[j] = acc
            else:
                for j in range(k):
                    acc = 0.0
                    for i in range(d):
                        acc += inv[j, i] * Y[i, t]
                    x[j] = acc
            xx = 0.0
            for j in range(k):
                xx += x[j] * x[j]
            if implicit:
                rate = eta / (1.0 + eta * xx)
            else:
                rate = eta
            # c = -rate * (C x - y)
            for i in range(d):
                acc = 0.0
                for j in range(k):
                    acc += C[i, j] * x[j]
                cvec[i] = -rate * (acc - Y[i, t])
            if gram_mode:
                ok = _gram_update(inv, C, cvec, x, bk1, bk2, z, tau)
            else:
                ok = _pinv_update(C, inv, cvec, x, bk1, bd1, bd2, bk2, tau)
            if not ok:
                done = t
                failed = True
                break
            for i in range(d):
                for j in range(k):
                    C[i, j] += cvec[i] * x[j]
            rates[t] = rate
    return done, failed


def orthonormal_pass(double[:, ::1] C, const double[:, :] Y, double[::1] etas, bint krasulina, double tau):
    cdef Py_ssize_t d = C.shape[0], k = C.shape[1], n_samples = Y.shape[1]
    cdef double[:, ::1] Ct = np.empty((d, k)), Q = np.empty((d, k)), V = np.zeros((d, k))
    cdef double[::1] x = np.empty(k), betas = np.empty(k), signs = np.empty(k), r = np.empty(d)
    cdef Py_ssize_t t, i, j
    cdef double eta, acc
    cdef int fail
    cdef bint failed = False
    cdef Py_ssize_t done = n_samples
    with nogil:
        for t in range(n_samples):
            eta = etas[t]
            for j in range(k):
                x[j] = 0.0
            for i in range(d):
                for j in range(k):
                    x[j] += C[i, j] * Y[i, t]
            if krasulina:
                for i in range(d):
                    acc = 0.0
                    for j in range(k):
                        acc += C[i, j] * x[j]
                    r[i] = acc - Y[i, t]
                for i in range(d):
                    for j in range(k):
                        Ct[i, j] = C[i, j] - eta * r[i] * x[j]
            else:
                for i in range(d):
                    for j in range(k):
                        Ct[i, j] = C[i, j] + eta * Y[i, t] * x[j]
            fail = _house_qr(Ct, Q, V, betas, signs, tau)
            if fail >= 0:
                done = t
                failed = True
                break
            for i in range(d):
                for j in range(k):
                    C[i, j] = Q[i, j]
    return done, failed
