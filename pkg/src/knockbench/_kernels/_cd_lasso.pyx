# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled coordinate-descent Lasso path. Same algorithm as cd_lasso_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from scipy.linalg.cython_blas cimport ddot, daxpy

cnp.import_array()


cdef inline double _soft(double z, double lam) noexcept nogil:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def cd_lasso_path(X, y, lambdas, int stop_nnz=-1, double tol=1e-7,
                  long max_sweeps=100000):
    cdef double[::1, :] Xv = np.asfortranarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] lam_v = np.ascontiguousarray(lambdas, dtype=np.float64)
    cdef int n = Xv.shape[0]
    cdef int p = Xv.shape[1]
    cdef int L = lam_v.shape[0]
    cdef int one = 1

    out_arr = np.zeros((L, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] b = np.zeros(p, dtype=np.float64)
    cdef double[::1] r = np.array(yv, dtype=np.float64)
    cdef double[::1] col_sq = np.empty(p, dtype=np.float64)
    cdef cnp.uint8_t[::1] in_active = np.zeros(p, dtype=np.uint8)
    cdef int[::1] active = np.zeros(p, dtype=np.int32)
    cdef int n_active = 0

    cdef int j, k, li, nnz, computed = 0
    cdef long sweeps = 0
    cdef double lam, z, old, new, delta, neg, max_delta, g, dn = n
    cdef bint added

    with nogil:
        for j in range(p):
            col_sq[j] = ddot(&n, &Xv[0, j], &one, &Xv[0, j], &one) / dn

        for li in range(L):
            lam = lam_v[li]
            while True:
                while n_active > 0:
                    max_delta = 0.0
                    for k in range(n_active):
                        j = active[k]
                        old = b[j]
                        z = ddot(&n, &Xv[0, j], &one, &r[0], &one) / dn + col_sq[j] * old
                        new = _soft(z, lam) / col_sq[j]
                        delta = new - old
                        if delta != 0.0:
                            neg = -delta
                            daxpy(&n, &neg, &Xv[0, j], &one, &r[0], &one)
                            b[j] = new
                            if fabs(delta) > max_delta:
                                max_delta = fabs(delta)
                    sweeps += 1
                    if max_delta < tol or sweeps >= max_sweeps:
                        break
                added = False
                for j in range(p):
                    if in_active[j] or col_sq[j] <= 0.0:
                        continue
                    g = fabs(ddot(&n, &Xv[0, j], &one, &r[0], &one)) / dn
                    if g > lam * (1.0 + 1e-12):
                        in_active[j] = 1
                        added = True
                if not added or sweeps >= max_sweeps:
                    break
                n_active = 0
                for j in range(p):
                    if in_active[j]:
                        active[n_active] = j
                        n_active += 1
            nnz = 0
            for j in range(p):
                out[li, j] = b[j]
                if b[j] != 0.0:
                    nnz += 1
            computed = li + 1
            if stop_nnz > 0 and nnz >= stop_nnz:
                break

    return out_arr[:computed]
