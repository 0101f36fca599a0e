"""Two-layer GCN with an explicit forward pass and hand-derived backward pass.

    pre1 = A X W1 + b1,   h1 = relu(pre1),   z = A h1 W2 + b2

The ReLU subgradient at exactly zero is taken as 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import CsrMatrix, ShapeError, as_dense, spmm

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class GcnParams:
    w1: np.ndarray
    b1: np.ndarray | None
    w2: np.ndarray
    b2: np.ndarray | None

    @property
    def use_bias(self) -> bool:
        return self.b1 is not None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES if getattr(self, k) is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "GcnParams":
        return cls(d["w1"], d.get("b1"), d["w2"], d.get("b2"))

    def copy(self) -> "GcnParams":
        return GcnParams.from_dict({k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class ForwardCache:
    a_hat: CsrMatrix
    x: np.ndarray
    ax: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    ah1: np.ndarray
    z: np.ndarray


def glorot_bound(fan_in, fan_out) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(feature_dim, hidden_dim, num_classes, seed, bias=True) -> GcnParams:
    if min(feature_dim, hidden_dim, num_classes) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    b_in = glorot_bound(feature_dim, hidden_dim)
    b_out = glorot_bound(hidden_dim, num_classes)
    w1 = rng.uniform(-b_in, b_in, size=(feature_dim, hidden_dim))
    w2 = rng.uniform(-b_out, b_out, size=(hidden_dim, num_classes))
    return GcnParams(
        w1, np.zeros(hidden_dim) if bias else None,
        w2, np.zeros(num_classes) if bias else None,
    )


def _check_params(params: GcnParams):
    if params.w1.shape[1] != params.w2.shape[0]:
        raise ShapeError(f"w1 {params.w1.shape} and w2 {params.w2.shape} disagree on hidden width")
    if params.b1 is not None and params.b1.shape != (params.w1.shape[1],):
        raise ShapeError("b1 does not match hidden width")
    if params.b2 is not None and params.b2.shape != (params.w2.shape[1],):
        raise ShapeError("b2 does not match class count")


def forward(params: GcnParams, a_hat: CsrMatrix, x, ax=None) -> ForwardCache:
    """Full forward pass. ``ax`` may carry a precomputed ``A @ X``."""
    _check_params(params)
    x = as_dense(x, "x")
    if a_hat.cols != x.shape[0]:
        raise ShapeError(f"a_hat is {a_hat.shape} but x has {x.shape[0]} rows")
    if x.shape[1] != params.w1.shape[0]:
        raise ShapeError(f"x has {x.shape[1]} features, w1 expects {params.w1.shape[0]}")
    if ax is None:
        ax = spmm(a_hat, x)
    pre1 = ax @ params.w1
    if params.b1 is not None:
        pre1 += params.b1
    h1 = np.maximum(pre1, 0.0)
    ah1 = spmm(a_hat, h1)
    z = ah1 @ params.w2
    if params.b2 is not None:
        z += params.b2
    return ForwardCache(a_hat, x, ax, pre1, h1, ah1, z)


def backward(cache: ForwardCache, params: GcnParams, dz) -> GcnParams:
    """Gradients of a scalar loss given ``dz = dL/dz``; same layout as ``params``."""
    dz = as_dense(dz, "dz")
    if dz.shape != cache.z.shape:
        raise ShapeError(f"dz is {dz.shape}, logits are {cache.z.shape}")
    dw2 = cache.ah1.T @ dz
    db2 = dz.sum(axis=0) if params.b2 is not None else None
    dh1 = spmm(cache.a_hat.transpose(), dz @ params.w2.T)
    dpre1 = dh1 * (cache.pre1 > 0)
    dw1 = cache.ax.T @ dpre1
    db1 = dpre1.sum(axis=0) if params.b1 is not None else None
    return GcnParams(dw1, db1, dw2, db2)


def predict(params: GcnParams, a_hat: CsrMatrix, x) -> np.ndarray:
    return forward(params, a_hat, x).z


# --- checkpoints ---------------------------------------------------------------

def params_to_json(params: GcnParams) -> dict:
    return {
        name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
        for name, arr in params.as_dict().items()
    }


def params_from_json(doc: dict) -> GcnParams:
    unknown = set(doc) - set(PARAM_NAMES)
    if unknown:
        raise ValueError(f"unknown checkpoint entries: {sorted(unknown)}")
    arrays = {}
    for name, entry in doc.items():
        if set(entry) != {"shape", "data"}:
            raise ValueError(f"checkpoint entry '{name}' needs exactly 'shape' and 'data'")
        arr = np.asarray(entry["data"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)):
            raise ValueError(f"checkpoint entry '{name}': {arr.size} values for shape {shape}")
        arrays[name] = arr.reshape(shape)
    for name in ("w1", "w2"):
        if name not in arrays:
            raise ValueError(f"checkpoint missing '{name}'")
    if ("b1" in arrays) != ("b2" in arrays):
        raise ValueError("checkpoint must carry both biases or neither")
    params = GcnParams.from_dict(arrays)
    _check_params(params)
    return params


def save_params(params: GcnParams, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(params_to_json(params)))


def load_params(path) -> GcnParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_json(json.load(fh))
