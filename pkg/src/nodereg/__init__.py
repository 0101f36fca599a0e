"""Norm-consistency regularization for semi-supervised node classification."""
from ._kernels import get_backend, set_backend

__version__ = "0.1.0"
__all__ = ["__version__", "get_backend", "set_backend"]
