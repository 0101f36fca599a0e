"""Kernel backend selection.

The compiled extension is used when importable. Setting
``NODEREG_BACKEND=python`` in the environment forces the numpy fallback;
``set_backend`` switches at runtime (benchmarks and backend-parity tests).
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_IMPLS = {"python": _pykernels}
if _ckernels is not None:
    _IMPLS["cython"] = _ckernels


def available_backends():
    return sorted(_IMPLS)


def _initial():
    requested = os.environ.get("NODEREG_BACKEND", "").strip().lower()
    if requested:
        if requested not in _IMPLS:
            raise ImportError(
                f"NODEREG_BACKEND={requested!r} unavailable; have {available_backends()}"
            )
        return requested
    return "cython" if "cython" in _IMPLS else "python"


_active = _initial()


def get_backend():
    return _active


def set_backend(name):
    """Select the kernel backend; returns the previous one."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    prev, _active = _active, name
    return prev


def spmm(row_ptr, col_idx, values, b, n_rows):
    return _IMPLS[_active].spmm(row_ptr, col_idx, values, b, n_rows)


def row_norms(z):
    return _IMPLS[_active].row_norms(z)


def jacobi_eigenvalues(a, tol, max_sweeps, v=None):
    return _IMPLS[_active].jacobi_eigenvalues(a, tol, max_sweeps, v)
