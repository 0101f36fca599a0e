"""Classification metrics, macro-averaged without class weighting."""
from __future__ import annotations

import numpy as np


def _select(values, labels, mask):
    labels = np.asarray(labels, dtype=np.int64)
    if mask is None:
        mask = np.ones(labels.size, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("metric mask is empty")
    return np.asarray(values)[mask], labels[mask]


def accuracy(predictions, labels, mask=None) -> float:
    p, y = _select(predictions, labels, mask)
    return float(np.mean(p == y))


def per_class_f1(predictions, labels, num_classes) -> np.ndarray:
    p = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    f1 = np.zeros(num_classes)
    for c in range(num_classes):
        tp = np.sum((p == c) & (y == c))
        denom = 2 * tp + np.sum((p == c) & (y != c)) + np.sum((p != c) & (y == c))
        f1[c] = 2 * tp / denom if denom else 0.0
    return f1


def macro_f1(predictions, labels, mask=None, num_classes=None) -> float:
    """Unweighted mean of per-class F1. A class with no predictions and no labels scores 0."""
    p, y = _select(predictions, labels, mask)
    if num_classes is None:
        num_classes = int(max(p.max(), y.max())) + 1
    return float(per_class_f1(p, y, num_classes).mean())


def binary_auc(scores, is_positive) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(s.size)
    # average 1-based ranks across tie groups
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auc_roc(scores, labels, mask=None, return_excluded=False):
    """One-vs-rest AUC averaged over classes.

    ``scores`` is (n, C) per-class scores, or a length-n vector of positive-class
    scores for a binary problem. Classes without both positives and negatives in
    the mask are excluded and reported when ``return_excluded`` is set.
    """
    s, y = _select(scores, labels, mask)
    if s.ndim == 1:
        auc = binary_auc(s, y == 1)
        excluded = [] if np.isfinite(auc) else [1]
        return (auc, excluded) if return_excluded else auc
    aucs, excluded = [], []
    for c in range(s.shape[1]):
        a = binary_auc(s[:, c], y == c)
        if np.isfinite(a):
            aucs.append(a)
        else:
            excluded.append(c)
    value = float(np.mean(aucs)) if aucs else float("nan")
    return (value, excluded) if return_excluded else value
