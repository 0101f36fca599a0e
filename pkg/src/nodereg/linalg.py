"""Dense and sparse linear-algebra kernels.

Dense matrices are plain ``float64`` numpy arrays of shape (rows, cols).
Sparse matrices use :class:`CsrMatrix`, kept in canonical form (sorted
column indices, no duplicates) so that sparse products are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


def as_dense(a, name="matrix") -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _transpose: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        rp, ci, vals = self.row_ptr, self.col_idx, self.values
        if rp.shape != (self.rows + 1,) or rp[0] != 0 or rp[-1] != ci.size:
            raise ValueError("row_ptr must have rows+1 entries, start at 0, end at nnz")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if ci.shape != vals.shape:
            raise ValueError("col_idx and values differ in length")
        if ci.size and (ci.min() < 0 or ci.max() >= self.cols):
            raise ValueError(f"column index out of range [0, {self.cols})")
        row_of = np.repeat(np.arange(self.rows), np.diff(rp))
        same_row = row_of[1:] == row_of[:-1]
        if np.any(same_row & (ci[1:] <= ci[:-1])):
            raise ValueError("column indices must be strictly increasing within each row")

    @classmethod
    def from_coo(cls, rows, cols, r, c, v=None) -> "CsrMatrix":
        """Build from triplets; duplicates are summed and entries sorted."""
        r = np.asarray(r, dtype=np.int64).ravel()
        c = np.asarray(c, dtype=np.int64).ravel()
        v = np.ones(r.size) if v is None else np.asarray(v, dtype=np.float64).ravel()
        if not (r.size == c.size == v.size):
            raise ValueError("row, col and value arrays differ in length")
        if r.size and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise ValueError("triplet index out of range")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if r.size:
            new = np.empty(r.size, dtype=bool)
            new[0] = True
            new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            starts = np.flatnonzero(new)
            v = np.add.reduceat(v, starts)
            r, c = r[starts], c[starts]
        row_ptr = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=rows), out=row_ptr[1:])
        return cls(int(rows), int(cols), row_ptr, c.copy(), np.ascontiguousarray(v))

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = as_dense(a)
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def identity(cls, n) -> "CsrMatrix":
        idx = np.arange(n)
        return cls.from_coo(n, n, idx, idx)

    @property
    def nnz(self) -> int:
        return int(self.col_idx.size)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_ptr))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_indices(), self.col_idx] = self.values
        return out

    def transpose(self) -> "CsrMatrix":
        if not self._transpose:
            self._transpose.append(
                CsrMatrix.from_coo(self.cols, self.rows, self.col_idx, self.row_indices(), self.values)
            )
        return self._transpose[0]

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_indices(), weights=self.values, minlength=self.rows)


def spmm(a: CsrMatrix, b) -> np.ndarray:
    """Sparse-dense product ``a @ b``."""
    b = as_dense(b, "b")
    if a.cols != b.shape[0]:
        raise ShapeError(f"spmm: a is {a.shape}, b is {b.shape}")
    return _kernels.spmm(a.row_ptr, a.col_idx, a.values, b, a.rows)


def matmul(a, b) -> np.ndarray:
    a = as_dense(a, "a")
    b = as_dense(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: a is {a.shape}, b is {b.shape}")
    return a @ b


def row_softmax(z) -> np.ndarray:
    z = as_dense(z, "z")
    if not np.all(np.isfinite(z)):
        raise ValueError("row_softmax: non-finite input")
    e = np.exp(z - z.max(axis=1, keepdims=True)) if z.shape[1] else z.copy()
    return e / e.sum(axis=1, keepdims=True)


def frobenius_row_norms(z) -> np.ndarray:
    """Per-row L2 norm."""
    return _kernels.row_norms(as_dense(z, "z"))


def _prepare_symmetric(m):
    a = as_dense(m, "m").copy()
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix is {a.shape}, not square")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T), scale


def symmetric_eigenvalues(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, descending, by cyclic Jacobi rotations.

    Convergence is declared when the off-diagonal Frobenius norm drops to
    ``tol * max(1, ||m||_F)``.
    """
    a, scale = _prepare_symmetric(m)
    diag, _ = _kernels.jacobi_eigenvalues(a, tol * scale, max_sweeps)
    return np.sort(diag)[::-1]


def symmetric_eigh(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues (descending) and matching eigenvectors as columns."""
    a, scale = _prepare_symmetric(m)
    v = np.eye(a.shape[0])
    diag, _ = _kernels.jacobi_eigenvalues(a, tol * scale, max_sweeps, v)
    order = np.argsort(-diag, kind="stable")
    return diag[order], v[:, order]
