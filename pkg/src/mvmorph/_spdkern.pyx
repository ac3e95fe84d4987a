# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the affine-invariant SPD geometry.

Same contract as mvmorph._spdnp: stacks of symmetric matrices with shape
(N, n, n), float64, C-contiguous, n <= 8. Eigendecompositions use cyclic
Jacobi rotations, which is fast and robust for the tiny matrices that occur
per pixel (n is 2 or 3 in practice).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp
from libc.math cimport fabs, log as c_log, sqrt

cnp.import_array()

EIG_FLOOR = 1e-12
cdef double _FLOOR = 1e-12


cdef inline void matmul(const double* a, const double* b, double* c, int n) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += a[i * n + k] * b[k * n + j]
            c[i * n + j] = acc


cdef inline void rebuild(const double* v, const double* w, double* out, int n) noexcept nogil:
    # out = V diag(w) V^T with eigenvectors in the columns of V
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for k in range(n):
                acc += v[i * n + k] * w[k] * v[j * n + k]
            out[i * n + j] = acc
            out[j * n + i] = acc


cdef inline void symmetrize(double* a, int n) noexcept nogil:
    cdef int i, j
    cdef double m
    for i in range(n):
        for j in range(i + 1, n):
            m = 0.5 * (a[i * n + j] + a[j * n + i])
            a[i * n + j] = m
            a[j * n + i] = m


cdef void jacobi_eig(double* a, double* w, double* v, int n) noexcept nogil:
    """Eigendecomposition of the symmetric matrix a (destroyed in place)."""
    cdef int i, j, p, q, sweep
    cdef double off, nrm, apq, theta, t, c, s, akp, akq

    for i in range(n):
        for j in range(n):
            v[i * n + j] = 1.0 if i == j else 0.0

    for sweep in range(64):
        off = 0.0
        nrm = 0.0
        for i in range(n):
            nrm += a[i * n + i] * a[i * n + i]
            for j in range(i + 1, n):
                off += a[i * n + j] * a[i * n + j]
                nrm += 2.0 * a[i * n + j] * a[i * n + j]
        if off <= 1e-30 * (nrm + 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p * n + q]
                if fabs(apq) == 0.0:
                    continue
                theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    akp = a[i * n + p]
                    akq = a[i * n + q]
                    a[i * n + p] = c * akp - s * akq
                    a[i * n + q] = s * akp + c * akq
                for i in range(n):
                    akp = a[p * n + i]
                    akq = a[q * n + i]
                    a[p * n + i] = c * akp - s * akq
                    a[q * n + i] = s * akp + c * akq
                for i in range(n):
                    akp = v[i * n + p]
                    akq = v[i * n + q]
                    v[i * n + p] = c * akp - s * akq
                    v[i * n + q] = s * akp + c * akq
    for i in range(n):
        w[i] = a[i * n + i]


cdef inline void sqrt_pair(const double* p, double* sq, double* isq, int n) noexcept nogil:
    cdef double buf[64]
    cdef double vec[64]
    cdef double w[8]
    cdef double s[8]
    cdef int i
    for i in range(n * n):
        buf[i] = p[i]
    jacobi_eig(buf, w, vec, n)
    for i in range(n):
        s[i] = sqrt(w[i] if w[i] > _FLOOR else _FLOOR)
    rebuild(vec, s, sq, n)
    for i in range(n):
        s[i] = 1.0 / s[i]
    rebuild(vec, s, isq, n)


cdef inline bint rows_equal(const double* a, const double* b, int nn) noexcept nogil:
    cdef int i
    for i in range(nn):
        if a[i] != b[i]:
            return 0
    return 1


cdef inline void whiten(const double* isq, const double* q, double* m, int n) noexcept nogil:
    cdef double tmp[64]
    matmul(isq, q, tmp, n)
    matmul(tmp, isq, m, n)
    symmetrize(m, n)


cdef inline void sandwich(const double* sq, const double* m, double* out, int n) noexcept nogil:
    cdef double tmp[64]
    matmul(sq, m, tmp, n)
    matmul(tmp, sq, out, n)
    symmetrize(out, n)


def spd_log(const double[:, :, ::1] P, const double[:, :, ::1] Q):
    cdef Py_ssize_t N = P.shape[0]
    cdef int n = P.shape[1]
    if n > 8:
        raise ValueError("compiled SPD kernels support n <= 8")
    cdef int nn = n * n
    out_arr = np.empty((N, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double sq[64]
    cdef double isq[64]
    cdef double m[64]
    cdef double vec[64]
    cdef double w[8]
    cdef Py_ssize_t i
    cdef int j
    with nogil:
        for i in range(N):
            if rows_equal(&P[i, 0, 0], &Q[i, 0, 0], nn):
                for j in range(nn):
                    out[i, 0, j] = 0.0
                continue
            sqrt_pair(&P[i, 0, 0], sq, isq, n)
            whiten(isq, &Q[i, 0, 0], m, n)
            jacobi_eig(m, w, vec, n)
            for j in range(n):
                w[j] = c_log(w[j] if w[j] > _FLOOR else _FLOOR)
            rebuild(vec, w, m, n)
            sandwich(sq, m, &out[i, 0, 0], n)
    return out_arr


def spd_exp(const double[:, :, ::1] P, const double[:, :, ::1] X):
    cdef Py_ssize_t N = P.shape[0]
    cdef int n = P.shape[1]
    if n > 8:
        raise ValueError("compiled SPD kernels support n <= 8")
    cdef int nn = n * n
    out_arr = np.empty((N, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double sq[64]
    cdef double isq[64]
    cdef double m[64]
    cdef double vec[64]
    cdef double w[8]
    cdef Py_ssize_t i
    cdef int j
    cdef bint zero
    with nogil:
        for i in range(N):
            zero = 1
            for j in range(nn):
                if X[i, 0, j] != 0.0:
                    zero = 0
                    break
            if zero:
                for j in range(nn):
                    out[i, 0, j] = P[i, 0, j]
                continue
            sqrt_pair(&P[i, 0, 0], sq, isq, n)
            whiten(isq, &X[i, 0, 0], m, n)
            jacobi_eig(m, w, vec, n)
            for j in range(n):
                w[j] = c_exp(w[j])
            rebuild(vec, w, m, n)
            sandwich(sq, m, &out[i, 0, 0], n)
    return out_arr


def spd_dist(const double[:, :, ::1] P, const double[:, :, ::1] Q):
    cdef Py_ssize_t N = P.shape[0]
    cdef int n = P.shape[1]
    if n > 8:
        raise ValueError("compiled SPD kernels support n <= 8")
    cdef int nn = n * n
    out_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double sq[64]
    cdef double isq[64]
    cdef double m[64]
    cdef double vec[64]
    cdef double w[8]
    cdef Py_ssize_t i
    cdef int j
    cdef double acc, lw
    with nogil:
        for i in range(N):
            if rows_equal(&P[i, 0, 0], &Q[i, 0, 0], nn):
                out[i] = 0.0
                continue
            sqrt_pair(&P[i, 0, 0], sq, isq, n)
            whiten(isq, &Q[i, 0, 0], m, n)
            jacobi_eig(m, w, vec, n)
            acc = 0.0
            for j in range(n):
                lw = c_log(w[j] if w[j] > _FLOOR else _FLOOR)
                acc += lw * lw
            out[i] = sqrt(acc)
    return out_arr


def spd_geopoint(const double[:, :, ::1] P, const double[:, :, ::1] Q, const double[::1] t):
    cdef Py_ssize_t N = P.shape[0]
    cdef int n = P.shape[1]
    if n > 8:
        raise ValueError("compiled SPD kernels support n <= 8")
    cdef int nn = n * n
    out_arr = np.empty((N, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double sq[64]
    cdef double isq[64]
    cdef double m[64]
    cdef double vec[64]
    cdef double w[8]
    cdef Py_ssize_t i
    cdef int j
    with nogil:
        for i in range(N):
            if t[i] == 0.0 or rows_equal(&P[i, 0, 0], &Q[i, 0, 0], nn):
                for j in range(nn):
                    out[i, 0, j] = P[i, 0, j]
                continue
            if t[i] == 1.0:
                for j in range(nn):
                    out[i, 0, j] = Q[i, 0, j]
                continue
            sqrt_pair(&P[i, 0, 0], sq, isq, n)
            whiten(isq, &Q[i, 0, 0], m, n)
            jacobi_eig(m, w, vec, n)
            for j in range(n):
                w[j] = c_exp(t[i] * c_log(w[j] if w[j] > _FLOOR else _FLOOR))
            rebuild(vec, w, m, n)
            sandwich(sq, m, &out[i, 0, 0], n)
    return out_arr


def spd_inner(const double[:, :, ::1] P, const double[:, :, ::1] X, const double[:, :, ::1] Y):
    cdef Py_ssize_t N = P.shape[0]
    cdef int n = P.shape[1]
    if n > 8:
        raise ValueError("compiled SPD kernels support n <= 8")
    out_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double pinv[64]
    cdef double buf[64]
    cdef double vec[64]
    cdef double w[8]
    cdef double t1[64]
    cdef double t2[64]
    cdef Py_ssize_t i
    cdef int j
    cdef double acc
    with nogil:
        for i in range(N):
            for j in range(n * n):
                buf[j] = P[i, 0, j]
            jacobi_eig(buf, w, vec, n)
            for j in range(n):
                w[j] = 1.0 / (w[j] if w[j] > _FLOOR else _FLOOR)
            rebuild(vec, w, pinv, n)
            matmul(pinv, &X[i, 0, 0], t1, n)
            matmul(pinv, &Y[i, 0, 0], t2, n)
            acc = 0.0
            for j in range(n * n):
                acc += t1[j] * t2[(j % n) * n + (j // n)]
            out[i] = acc
    return out_arr


def spd_karcher(const double[:, :, :, ::1] pts, const double[:, ::1] w,
                double tol, int maxiter):
    """Row-wise weighted Karcher means of SPD stacks.

    pts has shape (N, k, n, n) and w (N, k); rows start at their
    largest-weight point. Returns (means, n_failed); the caller turns
    n_failed > 0 into a convergence error.
    """
    cdef Py_ssize_t N = pts.shape[0]
    cdef int k = pts.shape[1]
    cdef int n = pts.shape[2]
    if n > 8:
        raise ValueError("compiled SPD kernels support n <= 8")
    out_arr = np.empty((N, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double f[64]
    cdef double sq[64]
    cdef double isq[64]
    cdef double meanw[64]
    cdef double m[64]
    cdef double vec[64]
    cdef double ww[8]
    cdef double wn[64]
    cdef double wsum, best, nrm2, lw
    cdef Py_ssize_t i
    cdef int j, q, it, jmax, nn = n * n, failed = 0
    cdef bint ok
    with nogil:
        for i in range(N):
            wsum = 0.0
            for j in range(k):
                wsum += w[i, j]
            jmax = 0
            best = w[i, 0]
            for j in range(1, k):
                if w[i, j] > best:
                    best = w[i, j]
                    jmax = j
            for q in range(nn):
                f[q] = pts[i, jmax, 0, q]
            ok = 0
            for it in range(maxiter + 1):
                sqrt_pair(f, sq, isq, n)
                for q in range(nn):
                    meanw[q] = 0.0
                for j in range(k):
                    if w[i, j] == 0.0:
                        continue
                    if rows_equal(f, &pts[i, j, 0, 0], nn):
                        continue
                    whiten(isq, &pts[i, j, 0, 0], m, n)
                    jacobi_eig(m, ww, vec, n)
                    for q in range(n):
                        ww[q] = c_log(ww[q] if ww[q] > _FLOOR else _FLOOR)
                    rebuild(vec, ww, m, n)
                    for q in range(nn):
                        meanw[q] += (w[i, j] / wsum) * m[q]
                nrm2 = 0.0
                for q in range(nn):
                    nrm2 += meanw[q] * meanw[q]
                if nrm2 <= tol * tol:
                    ok = 1
                    break
                if it == maxiter:
                    break
                # f <- sq expm(meanw) sq
                for q in range(nn):
                    m[q] = meanw[q]
                jacobi_eig(m, ww, vec, n)
                for q in range(n):
                    ww[q] = c_exp(ww[q])
                rebuild(vec, ww, m, n)
                sandwich(sq, m, f, n)
            if not ok:
                failed += 1
            for q in range(nn):
                out[i, 0, q] = f[q]
    return out_arr, failed
