"""Full-batch training loop, norm diagnostics and embedding export."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ExperimentConfig
from .graph import Graph, normalize_adjacency_row, normalize_adjacency_symmetric, ros_oversample
from .io import atomic_write_csv
from .linalg import frobenius_row_norms, row_softmax, spmm, symmetric_eigh
from .losses import (
    CenterState, SclConfig, center_loss, cross_entropy, l_bound_loss, nodereg_loss,
    reweight_class_weights, scl_loss,
)
from .metrics import accuracy, macro_auc_roc, macro_f1
from .model import GcnParams, backward, forward, init_params
from .optim import AdamState, adam_step

SPLITS = ("train", "val", "test", "unlabeled")


class DivergenceError(RuntimeError):
    def __init__(self, epoch, detail="loss is not finite"):
        super().__init__(f"training diverged at epoch {epoch}: {detail}")
        self.epoch = epoch


@dataclass
class RunResult:
    seed: int
    variant: str
    train_loss: list
    val_loss: list
    best_epoch: int
    test_accuracy: float
    test_macro_f1: float
    test_macro_auc: float
    auc_excluded: list
    norms: dict
    wall_seconds: float
    params: GcnParams = field(repr=False)
    logits: np.ndarray = field(repr=False)

    def same_outcome(self, other: "RunResult") -> bool:
        """Equality on everything except wall-clock time."""
        return (
            self.seed == other.seed and self.variant == other.variant
            and self.train_loss == other.train_loss and self.val_loss == other.val_loss
            and self.best_epoch == other.best_epoch
            and _eq_nan(self.test_accuracy, other.test_accuracy)
            and _eq_nan(self.test_macro_f1, other.test_macro_f1)
            and _eq_nan(self.test_macro_auc, other.test_macro_auc)
            and np.array_equal(self.logits, other.logits)
        )


def _eq_nan(a, b):
    return a == b or (np.isnan(a) and np.isnan(b))


def normalized_adjacency(g: Graph, kind: str):
    if kind == "symmetric":
        return normalize_adjacency_symmetric(g)
    if kind == "row":
        return normalize_adjacency_row(g)
    raise ValueError(f"unknown normalization {kind!r}")


def split_names(g: Graph) -> np.ndarray:
    names = np.full(g.num_nodes, "unlabeled", dtype=object)
    names[g.train_mask] = "train"
    names[g.val_mask] = "val"
    names[g.test_mask] = "test"
    return names


def _stats(norms):
    if norms.size == 0:
        return {"count": 0, "mean": float("nan"), "std": float("nan"), "cv": float("nan")}
    mean = float(norms.mean())
    std = float(norms.std())
    return {"count": int(norms.size), "mean": mean, "std": std,
            "cv": std / mean if mean > 0 else float("nan")}


def norm_stats(z, labels, masks=None) -> dict:
    """Mean, std and coefficient of variation of logit norms: overall, per class, per split.

    ``masks`` maps split name to boolean mask; std is the population std (ddof=0).
    """
    norms = frobenius_row_norms(z)
    labels = np.asarray(labels)
    out = {"overall": _stats(norms), "per_class": {}, "per_split": {}}
    for c in np.unique(labels):
        out["per_class"][int(c)] = _stats(norms[labels == c])
    for name, m in (masks or {}).items():
        out["per_split"][name] = _stats(norms[np.asarray(m, bool)])
    return out


def pca_project_2d(z) -> np.ndarray:
    """Project rows onto the top two principal directions of their covariance.

    Each direction is signed so its largest-magnitude loading is positive.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 2:
        raise ValueError("PCA needs at least two rows")
    centered = z - z.mean(axis=0)
    cov = centered.T @ centered / (z.shape[0] - 1)
    _, vecs = symmetric_eigh(cov)
    k = min(2, vecs.shape[1])
    top = vecs[:, :k].copy()
    for j in range(k):
        if top[np.argmax(np.abs(top[:, j])), j] < 0:
            top[:, j] *= -1
    proj = centered @ top
    if k < 2:
        proj = np.concatenate([proj, np.zeros((z.shape[0], 2 - k))], axis=1)
    return proj


def export_embeddings(path, z, g: Graph) -> None:
    """CSV with columns node_id, class, split, norm, pc1, pc2."""
    norms = frobenius_row_norms(z)
    pcs = pca_project_2d(z)
    splits = split_names(g)
    rows = [
        (i, int(g.labels[i]), splits[i], float(norms[i]), float(pcs[i, 0]), float(pcs[i, 1]))
        for i in range(g.num_nodes)
    ]
    atomic_write_csv(path, ["node_id", "class", "split", "norm", "pc1", "pc2"], rows)


def resolve_selection(cfg: ExperimentConfig, default: str) -> str:
    return default if cfg.selection == "auto" else cfg.selection


def _selection_score(kind, z, g: Graph):
    if kind == "last" or not g.val_mask.any():
        return 0.0
    pred = z.argmax(axis=1)
    if kind == "accuracy":
        return accuracy(pred, g.labels, g.val_mask)
    return macro_f1(pred, g.labels, g.val_mask, g.num_classes)


class _Objective:
    """Loss for one variant; owns the center-loss state across epochs."""

    def __init__(self, cfg: ExperimentConfig, variant: str, g: Graph):
        self.cfg = cfg
        self.variant = variant
        self.g = g
        lc = cfg.loss
        self.class_weights = (
            reweight_class_weights(g.labels, g.train_mask, g.num_classes)
            if variant == "ce+reweight" else None
        )
        if lc.nodereg.node_scope == "labeled_only":
            self.scope = g.train_mask
        else:
            self.scope = np.ones(g.num_nodes, dtype=bool)
        self.center = CenterState(np.zeros((g.num_classes, g.num_classes)), lc.center_alpha)

    def __call__(self, z):
        g, lc = self.g, self.cfg.loss
        ce = cross_entropy(z, g.labels, g.train_mask, self.class_weights)
        value, dz = ce.value, ce.dz
        if self.variant == "ce+nodereg":
            r = nodereg_loss(z, lc.nodereg, self.scope)
            value, dz = value + r.value, dz + r.dz
        elif self.variant == "ce+l_bound":
            r = l_bound_loss(z, self.scope)
            value, dz = value + lc.l_bound_weight * r.value, dz + lc.l_bound_weight * r.dz
        elif self.variant == "ce+center":
            r, self.center = center_loss(z, g.labels, g.train_mask, self.center)
            value, dz = value + lc.center_weight * r.value, dz + lc.center_weight * r.dz
        elif self.variant == "ce+scl":
            r = scl_loss(z, g.labels, g.train_mask, SclConfig(lc.scl_tau))
            value, dz = value + lc.scl_weight * r.value, dz + lc.scl_weight * r.dz
        return value, dz


def _val_loss(z, g: Graph):
    if not g.val_mask.any():
        return float("nan")
    return cross_entropy(z, g.labels, g.val_mask).value


def train(cfg: ExperimentConfig, graph: Graph, seed, variant=None, selection=None) -> RunResult:
    """Train a two-layer GCN full-batch with Adam; pick the best validation checkpoint.

    ``selection`` is ``"macro_f1"``, ``"accuracy"`` or ``"last"``; by default the
    config's choice, with ``auto`` meaning macro-F1.
    """
    started = time.perf_counter()
    variant = variant or cfg.loss.variant
    selection = selection or resolve_selection(cfg, "macro_f1")
    if cfg.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if not graph.train_mask.any():
        raise ValueError("graph has no training nodes")
    n_orig = graph.num_nodes
    g = ros_oversample(graph, seed) if variant == "ce+ros" else graph

    a_hat = normalized_adjacency(g, cfg.model.normalization)
    ax = spmm(a_hat, g.features)
    params = init_params(g.feature_dim, cfg.model.hidden_dim, g.num_classes, seed, cfg.model.bias)
    o = cfg.optim
    state = AdamState(o.lr, o.beta1, o.beta2, o.eps, o.weight_decay)
    objective = _Objective(cfg, variant, g)

    cache = forward(params, a_hat, g.features, ax)
    best = (-np.inf, 0, params, cache.z)
    train_loss, val_loss = [], []
    for epoch in range(cfg.epochs):
        value, dz = objective(cache.z)
        if not np.isfinite(value):
            raise DivergenceError(epoch)
        train_loss.append(float(value))
        grads = backward(cache, params, dz)
        new, state = adam_step(params.as_dict(), grads.as_dict(), state)
        params = GcnParams.from_dict(new)
        cache = forward(params, a_hat, g.features, ax)
        if not np.all(np.isfinite(cache.z)):
            raise DivergenceError(epoch, "logits are not finite")
        val_loss.append(_val_loss(cache.z, g))
        score = _selection_score(selection, cache.z, g)
        if selection == "last" or score > best[0]:
            best = (score, epoch + 1, params, cache.z)
        if cfg.patience and epoch + 1 - best[1] >= cfg.patience:
            break

    _, best_epoch, best_params, z = best
    z = z[:n_orig]
    pred = z.argmax(axis=1)
    test = graph.test_mask
    if test.any():
        acc = accuracy(pred, graph.labels, test)
        f1 = macro_f1(pred, graph.labels, test, graph.num_classes)
        auc, excluded = macro_auc_roc(row_softmax(z), graph.labels, test, return_excluded=True)
    else:
        acc = f1 = auc = float("nan")
        excluded = []
    masks = {name: split_names(graph) == name for name in SPLITS}
    return RunResult(
        seed=int(seed), variant=variant, train_loss=train_loss, val_loss=val_loss,
        best_epoch=best_epoch, test_accuracy=acc, test_macro_f1=f1, test_macro_auc=auc,
        auc_excluded=excluded, norms=norm_stats(z, graph.labels, masks),
        wall_seconds=time.perf_counter() - started, params=best_params, logits=z,
    )


def evaluate(params: GcnParams, g: Graph, normalization="symmetric", mask=None) -> dict:
    """Accuracy, macro-F1 and macro AUC of fixed parameters on ``mask`` (default: test)."""
    a_hat = normalized_adjacency(g, normalization)
    z = forward(params, a_hat, g.features).z
    mask = g.test_mask if mask is None else mask
    pred = z.argmax(axis=1)
    auc, excluded = macro_auc_roc(row_softmax(z), g.labels, mask, return_excluded=True)
    return {
        "accuracy": accuracy(pred, g.labels, mask),
        "macro_f1": macro_f1(pred, g.labels, mask, g.num_classes),
        "macro_auc": auc,
        "auc_excluded": excluded,
        "norm_cv": norm_stats(z, g.labels)["overall"]["cv"],
    }


def with_gamma(cfg: ExperimentConfig, gamma: float) -> ExperimentConfig:
    loss = replace(cfg.loss, nodereg=replace(cfg.loss.nodereg, gamma=gamma))
    return replace(cfg, loss=loss)
