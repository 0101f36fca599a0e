"""Numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Same signatures and same arithmetic order where it matters (the Jacobi
rotation updates), so results agree to rounding.
"""
import numpy as np


def spmm(row_ptr, col_idx, values, b, n_rows):
    out = np.zeros((n_rows, b.shape[1]), dtype=np.float64)
    if values.size == 0:
        return out
    products = values[:, None] * b[col_idx]
    counts = np.diff(row_ptr)
    nonempty = counts > 0
    out[nonempty] = np.add.reduceat(products, row_ptr[:-1][nonempty], axis=0)
    return out


def row_norms(z):
    return np.sqrt(np.einsum("ij,ij->i", z, z))


def jacobi_eigenvalues(a, tol, max_sweeps, v=None):
    n = a.shape[0]
    sweep = 0
    while sweep < max_sweeps:
        off_diag = a - np.diag(np.diag(a))
        if np.sqrt(np.sum(off_diag * off_diag)) <= tol:
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
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = c * col_q + s * col_p
                a[:, p] = new_p
                a[p, :] = new_p
                a[:, q] = new_q
                a[q, :] = new_q
                if v is not None:
                    vp = v[:, p].copy()
                    vq = v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = c * vq + s * vp
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
        sweep += 1
    return np.diag(a).copy(), sweep
