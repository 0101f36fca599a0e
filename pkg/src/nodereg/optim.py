"""Optimizers over dicts of named arrays, and a finite-difference gradient checker.

Steps are pure: they return new parameter dicts and a new state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ABS_FLOOR = 1e-8
FD_MAX_COORDS = 1000


def _check_shapes(params, grads):
    if set(params) != set(grads):
        raise ValueError(f"parameter names {sorted(params)} != gradient names {sorted(grads)}")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise ValueError(f"shape mismatch for '{k}': {np.shape(params[k])} vs {np.shape(grads[k])}")


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One Adam update with bias correction. Weight decay is added to the gradient (L2)."""
    _check_shapes(params, grads)
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k] + state.weight_decay * p if state.weight_decay else grads[k]
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_params[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(state.lr, state.beta1, state.beta2, state.eps,
                                 state.weight_decay, t, new_m, new_v)


def sgd_step(params: dict, grads: dict, lr: float, weight_decay: float = 0.0) -> dict:
    _check_shapes(params, grads)
    return {k: p - lr * (grads[k] + weight_decay * p) for k, p in params.items()}


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    """Elementwise |a - n| / max(|a|, |n|); absolute where both are below ``floor``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(n))
    diff = np.abs(a - n)
    return np.where(scale < floor, diff, diff / np.maximum(scale, floor))


def finite_diff_check(loss_fn, params, step=1e-5, max_coords=FD_MAX_COORDS, seed=0) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(params) -> (value, grads)`` with ``params``/``grads`` either a
    single array or a dict of arrays. Above ``max_coords`` total coordinates a
    seed-determined subset is checked.
    """
    single = isinstance(params, np.ndarray)
    base = {"p": params} if single else params
    base = {k: np.array(v, dtype=np.float64) for k, v in base.items()}

    def call(ps):
        value, grads = loss_fn(ps["p"] if single else ps)
        return float(value), ({"p": grads} if single else grads)

    _, analytic = call(base)
    coords = [(k, i) for k in base for i in range(base[k].size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(coords), size=max_coords, replace=False))
        coords = [coords[i] for i in pick]
    worst = 0.0
    for k, i in coords:
        flat = base[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        f_plus, _ = call(base)
        flat[i] = orig - step
        f_minus, _ = call(base)
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        a = np.asarray(analytic[k]).reshape(-1)[i]
        worst = max(worst, float(relative_error(a, numeric)))
    return worst
