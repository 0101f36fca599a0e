# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Must stay numerically in step with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def spmm(const cnp.int64_t[::1] row_ptr,
         const cnp.int64_t[::1] col_idx,
         const double[::1] values,
         const double[:, ::1] b,
         Py_ssize_t n_rows):
    cdef Py_ssize_t k = b.shape[1]
    out_arr = np.zeros((n_rows, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c, col
    cdef double v
    with nogil:
        for i in range(n_rows):
            for j in range(row_ptr[i], row_ptr[i + 1]):
                col = col_idx[j]
                v = values[j]
                for c in range(k):
                    out[i, c] += v * b[col, c]
    return out_arr


def row_norms(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], i, c
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for c in range(k):
                acc += z[i, c] * z[i, c]
            out[i] = sqrt(acc)
    return out_arr


def jacobi_eigenvalues(double[:, ::1] a, double tol, int max_sweeps, double[:, ::1] v=None):
    """Cyclic Jacobi on ``a`` in place. Returns (diagonal, sweeps used).

    When ``v`` is given (start from identity) the rotations are accumulated
    into it, leaving eigenvectors in its columns.
    """
    cdef Py_ssize_t n = a.shape[0], p, q, r
    cdef double off, apq, theta, t, c, s, arp, arq, app, aqq
    cdef bint track = v is not None
    cdef int sweep = 0
    while sweep < max_sweeps:
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += a[p, q] * a[p, q]
        if sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    if r != p and r != q:
                        arp = a[r, p]
                        arq = a[r, q]
                        a[r, p] = c * arp - s * arq
                        a[p, r] = a[r, p]
                        a[r, q] = c * arq + s * arp
                        a[q, r] = a[r, q]
                if track:
                    for r in range(n):
                        arp = v[r, p]
                        arq = v[r, q]
                        v[r, p] = c * arp - s * arq
                        v[r, q] = c * arq + s * arp
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
        sweep += 1
    diag = np.empty(n, dtype=np.float64)
    for p in range(n):
        diag[p] = a[p, p]
    return diag, sweep
