"""Experiment protocols: imbalance sweep, spurious-shift OOD, SNR study, gamma sensitivity.

Each protocol expands into independent runs, executes them (optionally on a
process pool) and reduces them in a fixed order, so result tables do not
depend on the worker count. Result rows carry no wall-clock time; that lives
in the run log only, which keeps reruns bit-identical.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ExperimentConfig
from .graph import (
    Graph, ImbalanceSpec, SnmSbmConfig, apply_spurious_shift, generate_sbm, generate_snm_sbm,
    load_graph, sample_fraction_split, sample_imbalanced_split, snm_features,
)
from .model import GcnParams
from .training import evaluate, train, with_gamma

log = logging.getLogger(__name__)

IMBALANCE_COLUMNS = (
    "ratio", "seed", "variant", "best_epoch", "test_accuracy", "test_macro_f1",
    "test_macro_auc", "norm_mean", "norm_std", "norm_cv", "final_train_loss",
)
OOD_COLUMNS = (
    "shift_strength", "seed", "variant", "best_epoch", "id_accuracy", "ood_accuracy",
    "id_macro_f1", "ood_macro_f1", "id_norm_cv", "ood_norm_cv",
)
SNR_COLUMNS = (
    "snr", "n", "control", "seed", "variant", "mu_norm", "train_accuracy", "pop_accuracy",
    "pop_accuracy_se", "pop_loss", "pop_loss_se", "norm_cv",
)
GAMMA_COLUMNS = ("scenario", "gamma", "seed", "metric", "value", "norm_cv")


@dataclass
class ResultTable:
    columns: tuple
    rows: list
    group_by: tuple
    metrics: tuple
    meta: dict = field(default_factory=dict)

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def summary(self) -> dict:
        """Mean and population std of every metric, per group, in first-seen order."""
        idx = [self.columns.index(c) for c in self.group_by]
        groups: dict = {}
        for row in self.rows:
            groups.setdefault(tuple(row[i] for i in idx), []).append(row)
        cells = []
        for key, rows in groups.items():
            cell = dict(zip(self.group_by, key))
            cell["runs"] = len(rows)
            for m in self.metrics:
                vals = np.array([r[self.columns.index(m)] for r in rows], dtype=np.float64)
                cell[m] = {"mean": float(vals.mean()), "std": float(vals.std())}
            cells.append(cell)
        return {"group_by": list(self.group_by), "cells": cells, **self.meta}


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def build_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.dataset.kind == "file":
        return load_graph(cfg.dataset.path)
    return generate_sbm(cfg.dataset.sbm)


# --- imbalance ---------------------------------------------------------------

def _imbalance_spec(cfg: ExperimentConfig, ratio) -> ImbalanceSpec:
    ic = cfg.imbalance
    return ImbalanceSpec(ic.majority_per_class, ratio, list(ic.minority_class_ids),
                         ic.val_per_class, ic.test_per_class)


def _imbalance_run(task):
    cfg, graph, ratio, seed, variant = task
    g = sample_imbalanced_split(graph, _imbalance_spec(cfg, ratio), seed)
    r = train(cfg, g, seed, variant, selection=_selection(cfg, "macro_f1"))
    log.info("imbalance ratio=%s seed=%s %s: macro-F1 %.4f (%.1fs)",
             ratio, seed, variant, r.test_macro_f1, r.wall_seconds)
    o = r.norms["overall"]
    return (float(ratio), int(seed), variant, r.best_epoch, r.test_accuracy, r.test_macro_f1,
            r.test_macro_auc, o["mean"], o["std"], o["cv"], r.train_loss[-1])


def _selection(cfg, default):
    return default if cfg.selection == "auto" else cfg.selection


def run_imbalance_experiment(cfg: ExperimentConfig, workers=1, graph=None) -> ResultTable:
    """Every ratio x seed x variant: imbalanced split, train, test metrics."""
    graph = build_graph(cfg) if graph is None else graph
    tasks = [(cfg, graph, ratio, seed, v)
             for ratio in cfg.imbalance.ratios for seed in cfg.seeds for v in cfg.loss.variants]
    rows = _map(_imbalance_run, tasks, workers)
    return ResultTable(IMBALANCE_COLUMNS, rows, ("ratio", "variant"),
                       ("test_accuracy", "test_macro_f1", "test_macro_auc", "norm_cv"))


# --- OOD -----------------------------------------------------------------------

def ood_pair(cfg: ExperimentConfig, graph: Graph, seed, strength=None):
    """(ID graph, OOD graph) sharing the split and the original feature block."""
    strength = cfg.shift.strength if strength is None else strength
    g = sample_fraction_split(graph, cfg.shift.fractions, seed)
    return (apply_spurious_shift(g, strength, seed, "id", cfg.shift.noise),
            apply_spurious_shift(g, strength, seed, "ood", cfg.shift.noise))


def _ood_run(task):
    cfg, graph, strength, seed, variant = task
    g_id, g_ood = ood_pair(cfg, graph, seed, strength)
    r = train(cfg, g_id, seed, variant, selection=_selection(cfg, "accuracy"))
    norm = cfg.model.normalization
    ood = evaluate(r.params, g_ood, norm)
    log.info("ood strength=%s seed=%s %s: ID %.4f OOD %.4f",
             strength, seed, variant, r.test_accuracy, ood["accuracy"])
    return (float(strength), int(seed), variant, r.best_epoch, r.test_accuracy, ood["accuracy"],
            r.test_macro_f1, ood["macro_f1"], r.norms["overall"]["cv"], ood["norm_cv"])


def run_ood_experiment(cfg: ExperimentConfig, workers=1, graph=None) -> ResultTable:
    """Train on the label-correlated spurious block, test with it and without it."""
    graph = build_graph(cfg) if graph is None else graph
    tasks = [(cfg, graph, cfg.shift.strength, seed, v)
             for seed in cfg.seeds for v in cfg.loss.variants]
    rows = _map(_ood_run, tasks, workers)
    return ResultTable(OOD_COLUMNS, rows, ("shift_strength", "variant"),
                       ("id_accuracy", "ood_accuracy", "id_macro_f1", "ood_macro_f1"))


# --- SNR / population risk -----------------------------------------------------

def mu_norm_for_snr(snr, n, p, s, sigma_p, d, q) -> float:
    """Invert SNR = |mu| / (sigma_p sqrt(d)) * (n (p + s))^((q - 2) / (2 q)) for |mu|."""
    return float(snr * sigma_p * np.sqrt(d) / (n * (p + s)) ** ((q - 2.0) / (2.0 * q)))


def edge_probabilities(sc, snr):
    """(same-label, cross-label) edge probabilities for one SNR point.

    At SNR 0 with ``null_structure`` both become (p + s) / 2: the graph then
    carries no label information either, keeping the expected degree.
    """
    if snr == 0 and sc.null_structure:
        mid = 0.5 * (sc.p + sc.s)
        return mid, mid
    return sc.p, sc.s


def _snr_mu(norm, d):
    return [norm / np.sqrt(d)] * d


def attached_logits(params: GcnParams, g: Graph, x_new, neighbors):
    """Logits of one extra node joined to ``neighbors`` under row normalization.

    Exact: equals the last row of a forward pass on the (n+1)-node graph, but only
    touches the new node and its neighbours, whose aggregates gain one term.
    """
    neighbors = np.asarray(neighbors, dtype=np.int64)
    x = g.features
    d_new = neighbors.size + 1.0
    d_nb = np.diff(g.adjacency.row_ptr)[neighbors] + 2.0
    ax_new = (x_new + x[neighbors].sum(axis=0)) / d_new
    ax_nb = (_closed_sums(g, neighbors) + x_new) / d_nb[:, None]
    h_new = _hidden(params, ax_new[None, :])[0]
    h_nb = _hidden(params, ax_nb)
    z = (h_new + h_nb.sum(axis=0)) / d_new @ params.w2
    return z + params.b2 if params.b2 is not None else z


def _closed_sums(g: Graph, rows):
    """Feature sums over each row's closed neighbourhood."""
    adj, x = g.adjacency, g.features
    if not len(rows):
        return np.zeros((0, x.shape[1]))
    return np.stack([x[v] + x[adj.col_idx[adj.row_ptr[v]:adj.row_ptr[v + 1]]].sum(axis=0)
                     for v in rows])


def _hidden(params: GcnParams, ax):
    pre = ax @ params.w1
    if params.b1 is not None:
        pre = pre + params.b1
    return np.maximum(pre, 0.0)


@dataclass
class PopulationEstimate:
    accuracy: float
    accuracy_se: float
    loss: float
    loss_se: float
    points: int


def sample_test_points(g: Graph, mu, sigma_p, p, s, count, rng):
    """Fresh SNM points and their SBM edges to the training nodes."""
    labels = rng.integers(0, 2, size=count)
    x = snm_features(2 * labels - 1, mu, sigma_p, rng)
    u = rng.random((count, g.num_nodes))
    prob = np.where(g.labels[None, :] == labels[:, None], p, s)
    return labels, x, u < prob


def population_estimate(params: GcnParams, g: Graph, points) -> PopulationEstimate:
    """Monte-Carlo accuracy and cross-entropy over attached test points, with standard errors."""
    labels, x, links = points
    correct = np.empty(labels.size)
    losses = np.empty(labels.size)
    for i in range(labels.size):
        z = attached_logits(params, g, x[i], np.flatnonzero(links[i]))
        correct[i] = float(np.argmax(z) == labels[i])
        m = z.max()
        losses[i] = m + np.log(np.exp(z - m).sum()) - z[labels[i]]
    t = labels.size
    se = (lambda a: float(a.std(ddof=1) / np.sqrt(t)) if t > 1 else float("nan"))
    return PopulationEstimate(float(correct.mean()), se(correct), float(losses.mean()), se(losses), t)


def snr_training_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Bias-free, row-normalized GCN trained on every node; last epoch kept."""
    sc = cfg.snr
    model = replace(cfg.model, hidden_dim=sc.hidden_dim, bias=False, normalization="row")
    return replace(cfg, model=model, epochs=sc.epochs, patience=0, selection="last")


def _snr_run(task):
    cfg, snr, n, control, seed = task
    sc = cfg.snr
    norm = mu_norm_for_snr(snr, n, sc.p, sc.s, sc.sigma_p, sc.d, sc.q)
    mu = _snr_mu(norm, sc.d)
    p, s = edge_probabilities(sc, snr)
    g = generate_snm_sbm(SnmSbmConfig(n, p, s, mu, sc.sigma_p, seed=seed))
    everyone = np.ones(n, dtype=bool)
    g = g.with_masks(everyone, ~everyone, ~everyone)
    points = sample_test_points(g, mu, sc.sigma_p, p, s, sc.test_points,
                                np.random.default_rng([int(seed), 1]))
    tcfg = snr_training_config(cfg)
    rows = []
    for variant in ("ce", "ce+nodereg"):
        r = train(tcfg, g, seed, variant, selection="last")
        train_acc = float(np.mean(r.logits.argmax(axis=1) == g.labels))
        est = population_estimate(r.params, g, points)
        log.info("snr=%s n=%s seed=%s %s: population accuracy %.4f +- %.4f",
                 snr, n, seed, variant, est.accuracy, est.accuracy_se)
        rows.append((float(snr), int(n), bool(control), int(seed), variant, norm, train_acc,
                     est.accuracy, est.accuracy_se, est.loss, est.loss_se,
                     r.norms["overall"]["cv"]))
    return rows


def run_snr_experiment(cfg: ExperimentConfig, workers=1) -> ResultTable:
    """Plain vs NodeReg GCN on SNM-SBM graphs over an SNR x n grid plus control points."""
    sc = cfg.snr
    grid = [(v, False) for v in sc.snr_grid] + [(v, True) for v in sc.control_snrs]
    tasks = [(cfg, snr, n, control, seed)
             for snr, control in grid for n in sc.n_grid for seed in cfg.seeds]
    rows = [row for chunk in _map(_snr_run, tasks, workers) for row in chunk]
    return ResultTable(SNR_COLUMNS, rows, ("snr", "n", "control", "variant"),
                       ("train_accuracy", "pop_accuracy", "pop_loss", "norm_cv"))


# --- gamma sensitivity ---------------------------------------------------------

def _gamma_run(task):
    cfg, graph, scenario, gamma, seed = task
    gcfg = with_gamma(cfg, gamma)
    if scenario == "imbalance":
        g = sample_imbalanced_split(graph, _imbalance_spec(cfg, cfg.gamma.imbalance_ratio), seed)
        r = train(gcfg, g, seed, "ce+nodereg", selection=_selection(cfg, "macro_f1"))
        value, metric = r.test_macro_f1, "test_macro_f1"
    else:
        g_id, g_ood = ood_pair(cfg, graph, seed)
        r = train(gcfg, g_id, seed, "ce+nodereg", selection=_selection(cfg, "accuracy"))
        value, metric = evaluate(r.params, g_ood, cfg.model.normalization)["accuracy"], "ood_accuracy"
    log.info("gamma %s=%g seed=%s: %s %.4f", scenario, gamma, seed, metric, value)
    return (scenario, float(gamma), int(seed), metric, value, r.norms["overall"]["cv"])


def run_gamma_sweep(cfg: ExperimentConfig, workers=1, graph=None) -> ResultTable:
    """CE+NodeReg metric against gamma for each configured scenario."""
    graph = build_graph(cfg) if graph is None else graph
    grids = {"imbalance": cfg.gamma.imbalance_grid, "ood": cfg.gamma.ood_grid}
    tasks = [(cfg, graph, sc, gamma, seed)
             for sc in cfg.gamma.scenarios for gamma in grids[sc] for seed in cfg.seeds]
    rows = _map(_gamma_run, tasks, workers)
    return ResultTable(GAMMA_COLUMNS, rows, ("scenario", "gamma"), ("value", "norm_cv"))


__all__ = [
    "IMBALANCE_COLUMNS", "OOD_COLUMNS", "SNR_COLUMNS", "GAMMA_COLUMNS", "ResultTable",
    "build_graph", "run_imbalance_experiment", "run_ood_experiment", "run_snr_experiment",
    "run_gamma_sweep", "attached_logits", "population_estimate", "sample_test_points",
    "mu_norm_for_snr", "ood_pair", "snr_training_config",
]
