"""Training objectives. Every loss returns its value and the gradient w.r.t. the logits.

NodeReg drives each logit norm toward the scope mean:

    F = mean_v |z_v|            (held constant when differentiating)
    delta_v = 1 - |z_v| / F
    L = weight * mean_v smooth_l1(delta_v, gamma)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import as_dense, frobenius_row_norms

NORM_GUARD = 1e-12


class DegenerateLogitsError(ValueError):
    """Mean logit norm is zero, so the relative deviation is undefined."""


@dataclass
class LossReport:
    value: float
    dz: np.ndarray
    aux: dict = field(default_factory=dict)


@dataclass
class NodeRegConfig:
    gamma: float = 1e-4
    weight: float = 1.0
    node_scope: str = "all_nodes"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")
        if self.node_scope not in ("all_nodes", "labeled_only"):
            raise ValueError("node_scope must be 'all_nodes' or 'labeled_only'")


@dataclass
class SclConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")


@dataclass
class CenterState:
    centers: np.ndarray
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")


def smooth_l1(delta, gamma):
    """Value and derivative of the smooth-L1 penalty; works elementwise on arrays."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    delta = np.asarray(delta, dtype=np.float64)
    a = np.abs(delta)
    value = np.where(a < gamma, delta * delta / (2.0 * gamma), a - gamma / 2.0)
    deriv = np.where(a <= gamma, delta / gamma, np.sign(delta))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def _mask(mask, n, what="mask"):
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ValueError(f"{what} must have length {n}")
    if not m.any():
        raise ValueError(f"{what} is empty")
    return m


def _norm_deviation(z, scope, mean_norm):
    norms = frobenius_row_norms(z)
    f_bar = float(norms[scope].mean()) if mean_norm is None else float(mean_norm)
    if not f_bar > 0:
        raise DegenerateLogitsError("degenerate logits: mean norm over scope is zero")
    delta = 1.0 - norms / f_bar
    unit = z / np.maximum(norms, NORM_GUARD)[:, None]
    return norms, f_bar, delta, unit


def nodereg_loss(z, cfg: NodeRegConfig, scope_mask, mean_norm=None) -> LossReport:
    """NodeReg on logits ``z`` over ``scope_mask``.

    ``mean_norm`` overrides the scope mean; the gradient always treats it as a constant.
    """
    z = as_dense(z, "z")
    scope = _mask(scope_mask, z.shape[0], "scope_mask")
    norms, f_bar, delta, unit = _norm_deviation(z, scope, mean_norm)
    vals, deriv = smooth_l1(delta[scope], cfg.gamma)
    m = scope.sum()
    dz = np.zeros_like(z)
    coef = cfg.weight * deriv * (-1.0 / f_bar) / m
    dz[scope] = coef[:, None] * unit[scope]
    return LossReport(
        cfg.weight * float(vals.mean()), dz,
        {"mean_norm": f_bar, "delta": np.where(scope, delta, np.nan)},
    )


def l_bound_loss(z, scope_mask, mean_norm=None) -> LossReport:
    """F^-1 * mean(delta^2); the derivative in delta is 2 delta / F and is unbounded."""
    z = as_dense(z, "z")
    scope = _mask(scope_mask, z.shape[0], "scope_mask")
    norms, f_bar, delta, unit = _norm_deviation(z, scope, mean_norm)
    d = delta[scope]
    m = scope.sum()
    dz = np.zeros_like(z)
    coef = (2.0 * d / f_bar) * (-1.0 / f_bar) / m
    dz[scope] = coef[:, None] * unit[scope]
    return LossReport(float(np.mean(d * d)) / f_bar, dz, {"mean_norm": f_bar})


def reweight_class_weights(labels, train_mask, num_classes) -> np.ndarray:
    """Per-class weight max_count / count over the training nodes (0 for absent classes)."""
    counts = np.bincount(np.asarray(labels)[np.asarray(train_mask, bool)], minlength=num_classes)
    w = np.zeros(num_classes)
    present = counts > 0
    w[present] = counts.max() / counts[present]
    return w


def cross_entropy(z, labels, mask, class_weights=None) -> LossReport:
    z = as_dense(z, "z")
    m = _mask(mask, z.shape[0])
    labels = np.asarray(labels, dtype=np.int64)
    zs = z[m]
    ys = labels[m]
    shifted = zs - zs.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(ys.size), ys] - log_norm
    w = np.ones(ys.size) if class_weights is None else np.asarray(class_weights, float)[ys]
    total = w.sum()
    if not total > 0:
        raise ValueError("class weights sum to zero over the mask")
    probs = np.exp(shifted - log_norm[:, None])
    probs[np.arange(ys.size), ys] -= 1.0
    dz = np.zeros_like(z)
    dz[m] = probs * (w / total)[:, None]
    return LossReport(float(-(w * log_p).sum() / total), dz)


def center_loss(z, labels, mask, state: CenterState):
    """Half mean squared distance to class centers, then one center update step.

    Returns ``(report, new_state)``; ``state`` is left untouched.
    """
    z = as_dense(z, "z")
    m = _mask(mask, z.shape[0])
    labels = np.asarray(labels, dtype=np.int64)
    centers = state.centers
    idx = np.flatnonzero(m)
    diff = z[idx] - centers[labels[idx]]
    value = 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))
    dz = np.zeros_like(z)
    dz[idx] = diff / idx.size
    k = centers.shape[0]
    counts = np.bincount(labels[idx], minlength=k).astype(float)
    delta = np.zeros_like(centers)
    np.add.at(delta, labels[idx], -diff)
    delta /= (1.0 + counts)[:, None]
    new_centers = centers - state.alpha * delta
    return LossReport(value, dz), CenterState(new_centers, state.alpha)


def scl_loss(z, labels, mask, cfg: SclConfig) -> LossReport:
    """Supervised contrastive loss on cosine similarities, averaged over anchors.

    For anchor i with positives P(i) (same label, masked, not i):
        L_i = -1/|P(i)| * sum_p log( exp(s_ip / tau) / sum_{a != i} exp(s_ia / tau) )
    """
    z = as_dense(z, "z")
    m = _mask(mask, z.shape[0])
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.flatnonzero(m)
    y = labels[idx]
    zs = z[idx]
    n = idx.size
    same = (y[:, None] == y[None, :]) & ~np.eye(n, dtype=bool)
    pos_count = same.sum(axis=1)
    lonely = np.flatnonzero(pos_count == 0)
    if lonely.size:
        raise ValueError(f"node {int(idx[lonely[0]])} has no same-class peer in the mask")
    norms = np.maximum(np.linalg.norm(zs, axis=1), NORM_GUARD)
    u = zs / norms[:, None]
    logits = (u @ u.T) / cfg.tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - row_max)
    denom = ex.sum(axis=1, keepdims=True)
    log_q = logits - row_max - np.log(denom)
    pos_w = same / pos_count[:, None]
    per_anchor = -np.sum(np.where(same, log_q, 0.0) * pos_w, axis=1)
    value = float(per_anchor.mean())
    # dL/ds_ia for anchor i, then symmetrize since s is shared
    g = (ex / denom - pos_w) / (cfg.tau * n)
    gs = g + g.T
    du = gs @ u
    dzs = (du - np.sum(du * u, axis=1, keepdims=True) * u) / norms[:, None]
    dz = np.zeros_like(z)
    dz[idx] = dzs
    return LossReport(value, dz)


def combined_loss(z, labels, mask, nodereg_cfg: NodeRegConfig, scope_mask,
                  class_weights=None) -> LossReport:
    """Cross-entropy plus NodeReg."""
    ce = cross_entropy(z, labels, mask, class_weights)
    if nodereg_cfg.weight == 0:
        return ce
    reg = nodereg_loss(z, nodereg_cfg, scope_mask)
    return LossReport(ce.value + reg.value, ce.dz + reg.dz,
                      {"ce": ce.value, "nodereg": reg.value, **reg.aux})
