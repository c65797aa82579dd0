# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_pykernels`` for the contracts."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def bspline_basis(x, knots, int degree):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(knots, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t nb = t.shape[0] - degree - 1
    out = np.zeros((n, nb), dtype=np.float64)
    cdef double[:, ::1] B = out
    cdef double vals[32]
    cdef double dl[32]
    cdef double dr[32]
    cdef Py_ssize_t i, j, r, left, lo, hi, mid
    cdef double xi, saved, temp
    if degree > 30:
        raise ValueError("degree too large")
    with nogil:
        for i in range(n):
            xi = xv[i]
            # largest left with t[left] <= xi, restricted to [degree, nb-1]
            lo = degree
            hi = nb
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if t[mid] <= xi:
                    lo = mid
                else:
                    hi = mid
            left = lo
            vals[0] = 1.0
            for j in range(1, degree + 1):
                dl[j] = xi - t[left + 1 - j]
                dr[j] = t[left + j] - xi
                saved = 0.0
                for r in range(j):
                    temp = vals[r] / (dr[r + 1] + dl[j - r])
                    vals[r] = saved + dr[r + 1] * temp
                    saved = dl[j - r] * temp
                vals[j] = saved
            for r in range(degree + 1):
                B[i, left - degree + r] = vals[r]
    return out


cdef int _cholesky(double[:, ::1] A, Py_ssize_t p) noexcept nogil:
    """In-place lower Cholesky; returns nonzero on a non-positive pivot."""
    cdef Py_ssize_t i, j, k
    cdef double s, temp
    for j in range(p):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if not s > 0.0:
            return 1
        s = sqrt(s)
        A[j, j] = s
        for i in range(j + 1, p):
            temp = A[i, j]
            for k in range(j):
                temp -= A[i, k] * A[j, k]
            A[i, j] = temp / s
    return 0


def gibbs_block(XtX, Xty, X, y, prior_fixed, group, double tau_rate0, double lam_rate0,
                Z, Gt, Gl, b, double tau, lam, bint update_tau, bint update_lam,
                out_b, out_tau, out_lam):
    cdef const double[:, ::1] xtx = np.ascontiguousarray(XtX, dtype=np.float64)
    cdef const double[::1] xty = np.ascontiguousarray(Xty, dtype=np.float64)
    cdef const double[:, ::1] Xm = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] pf = np.ascontiguousarray(prior_fixed, dtype=np.float64)
    cdef const cnp.int64_t[::1] grp = np.ascontiguousarray(group, dtype=np.int64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef const double[::1] gt = np.ascontiguousarray(Gt, dtype=np.float64)
    cdef const double[:, ::1] gl = np.ascontiguousarray(Gl, dtype=np.float64)
    cdef double[::1] bv = b
    cdef double[::1] lv = lam
    cdef double[:, ::1] ob = out_b
    cdef double[::1] ot = out_tau
    cdef double[:, ::1] ol = out_lam

    cdef Py_ssize_t m = zv.shape[0]
    cdef Py_ssize_t p = zv.shape[1]
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t G = lv.shape[0]
    cdef Py_ssize_t it, i, j, k, g
    cdef double s, rss, resid
    cdef int fail = 0

    Qa = np.empty((p, p), dtype=np.float64)
    ua = np.empty(p, dtype=np.float64)
    ssa = np.empty(max(G, 1), dtype=np.float64)
    cdef double[:, ::1] Q = Qa
    cdef double[::1] u = ua
    cdef double[::1] ss = ssa

    with nogil:
        for it in range(m):
            for i in range(p):
                for j in range(i + 1):
                    Q[i, j] = tau * xtx[i, j]
                if grp[i] < 0:
                    Q[i, i] += pf[i]
                else:
                    Q[i, i] += lv[grp[i]]
            if _cholesky(Q, p) != 0:
                fail = 1
                break
            # forward: L u = tau * Xty
            for i in range(p):
                s = tau * xty[i]
                for k in range(i):
                    s -= Q[i, k] * u[k]
                u[i] = s / Q[i, i]
            # backward: L^T b = u + z
            for i in range(p - 1, -1, -1):
                s = u[i] + zv[it, i]
                for k in range(i + 1, p):
                    s -= Q[k, i] * bv[k]
                bv[i] = s / Q[i, i]
            if update_tau:
                rss = 0.0
                for i in range(n):
                    resid = yv[i]
                    for j in range(p):
                        resid -= Xm[i, j] * bv[j]
                    rss += resid * resid
                tau = gt[it] / (tau_rate0 + 0.5 * rss)
            if update_lam:
                for g in range(G):
                    ss[g] = 0.0
                for j in range(p):
                    if grp[j] >= 0:
                        ss[grp[j]] += bv[j] * bv[j]
                for g in range(G):
                    lv[g] = gl[it, g] / (lam_rate0 + 0.5 * ss[g])
            for j in range(p):
                ob[it, j] = bv[j]
            ot[it] = tau
            for g in range(G):
                ol[it, g] = lv[g]
    if fail:
        raise np.linalg.LinAlgError("Matrix is not positive definite")
    return tau
