"""Graph data model, adjacency normalization, synthetic generators, splits and file I/O."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linalg import CsrMatrix

# rows of the upper triangle sampled per block when drawing SBM edges
_EDGE_BLOCK_ROWS = 256


class GraphFormatError(ValueError):
    """A graph file or graph value failed validation."""


class InsufficientNodesError(ValueError):
    """A class has too few nodes to fill its split quotas."""


@dataclass(eq=False)
class Graph:
    num_nodes: int
    adjacency: CsrMatrix
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        n = self.num_nodes
        if self.adjacency.shape != (n, n):
            raise GraphFormatError(f"adjacency is {self.adjacency.shape}, expected ({n}, {n})")
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphFormatError(f"features must be ({n}, d), got {self.features.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (n,):
            raise GraphFormatError(f"labels must have length {n}")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise GraphFormatError(f"labels must lie in [0, {self.num_classes})")
        for name in ("train_mask", "val_mask", "test_mask"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != (n,):
                raise GraphFormatError(f"{name} must have length {n}")
            setattr(self, name, m)
        if np.any(self.train_mask & self.val_mask) or np.any(self.train_mask & self.test_mask) \
                or np.any(self.val_mask & self.test_mask):
            raise GraphFormatError("train/val/test masks overlap")

    @classmethod
    def from_edges(cls, num_nodes, edges, features, labels, num_classes,
                   train_mask=None, val_mask=None, test_mask=None) -> "Graph":
        """Build from undirected edges (any orientation; duplicates collapse)."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= num_nodes):
            raise GraphFormatError(f"edge references a node outside [0, {num_nodes})")
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphFormatError("self-loops are not stored in the adjacency")
        r = np.concatenate([e[:, 0], e[:, 1]])
        c = np.concatenate([e[:, 1], e[:, 0]])
        adj = CsrMatrix.from_coo(num_nodes, num_nodes, r, c)
        adj = CsrMatrix(num_nodes, num_nodes, adj.row_ptr, adj.col_idx, np.ones(adj.nnz))
        empty = np.zeros(num_nodes, dtype=bool)
        return cls(
            num_nodes, adj, features, labels, int(num_classes),
            empty if train_mask is None else train_mask,
            empty if val_mask is None else val_mask,
            empty if test_mask is None else test_mask,
        )

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with u < v, sorted."""
        rows = self.adjacency.row_indices()
        cols = self.adjacency.col_idx
        keep = rows < cols
        return np.stack([rows[keep], cols[keep]], axis=1)

    def with_masks(self, train_mask, val_mask, test_mask) -> "Graph":
        return replace(self, train_mask=train_mask, val_mask=val_mask, test_mask=test_mask)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        a, b = self.adjacency, other.adjacency
        return (
            self.num_nodes == other.num_nodes
            and self.num_classes == other.num_classes
            and np.array_equal(a.row_ptr, b.row_ptr)
            and np.array_equal(a.col_idx, b.col_idx)
            and np.array_equal(a.values, b.values)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.train_mask, other.train_mask)
            and np.array_equal(self.val_mask, other.val_mask)
            and np.array_equal(self.test_mask, other.test_mask)
        )


# --- normalization -----------------------------------------------------------

def _with_self_loops(g: Graph) -> CsrMatrix:
    a = g.adjacency
    idx = np.arange(g.num_nodes)
    return CsrMatrix.from_coo(
        g.num_nodes, g.num_nodes,
        np.concatenate([a.row_indices(), idx]),
        np.concatenate([a.col_idx, idx]),
        np.concatenate([a.values, np.ones(g.num_nodes)]),
    )


def normalize_adjacency_symmetric(g: Graph) -> CsrMatrix:
    """D^-1/2 (A + I) D^-1/2, the standard GCN propagation matrix."""
    at = _with_self_loops(g)
    inv_sqrt = 1.0 / np.sqrt(at.row_sums())
    vals = inv_sqrt[at.row_indices()] * at.values * inv_sqrt[at.col_idx]
    return CsrMatrix(at.rows, at.cols, at.row_ptr, at.col_idx, vals)


def normalize_adjacency_row(g: Graph) -> CsrMatrix:
    """D^-1 (A + I): each row averages a node's closed neighbourhood."""
    at = _with_self_loops(g)
    deg = at.row_sums()
    vals = at.values / deg[at.row_indices()]
    return CsrMatrix(at.rows, at.cols, at.row_ptr, at.col_idx, vals)


# --- generators --------------------------------------------------------------

def sample_sbm_edges(labels, prob, rng) -> np.ndarray:
    """Draw undirected SBM edges; ``prob[a, b]`` is the edge probability between classes a and b.

    The upper triangle is sampled in row blocks so memory stays O(block * n).
    """
    labels = np.asarray(labels, dtype=np.int64)
    prob = np.asarray(prob, dtype=np.float64)
    n = labels.size
    chunks = []
    for start in range(0, n, _EDGE_BLOCK_ROWS):
        stop = min(n, start + _EDGE_BLOCK_ROWS)
        rows = np.arange(start, stop)
        u = rng.random((stop - start, n))
        p = prob[labels[rows][:, None], labels[None, :]]
        hit = (u < p) & (np.arange(n)[None, :] > rows[:, None])
        r, c = np.nonzero(hit)
        chunks.append(np.stack([r + start, c], axis=1))
    return np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)


@dataclass
class SnmSbmConfig:
    """Signal-noise features on a two-block SBM.

    ``p`` is the same-label edge probability and ``s`` the cross-label one.
    Features are ``[y * mu, xi]`` with ``xi`` Gaussian noise orthogonal to ``mu``.
    """

    n: int
    p: float
    s: float
    mu: list
    sigma_p: float
    seed: int = 0

    @property
    def d(self) -> int:
        return len(self.mu)

    def validate(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.s <= 1.0):
            raise ValueError("edge probabilities p and s must lie in [0, 1]")
        if not self.sigma_p > 0:
            raise ValueError("sigma_p must be positive")
        if self.d < 1:
            raise ValueError("mu must have at least one entry")
        if self.n < 2:
            raise ValueError("SNM-SBM needs n >= 2")


def balanced_labels(n, num_classes, rng) -> np.ndarray:
    labels = np.arange(n) % num_classes
    return rng.permutation(labels)


def snm_features(signs, mu, sigma_p, rng) -> np.ndarray:
    """Rows ``[y * mu, xi]`` with ``xi ~ N(0, sigma_p^2 (I - mu mu^T / |mu|^2))``.

    With ``mu = 0`` there is no direction to project out and ``xi`` is isotropic.
    """
    mu = np.asarray(mu, dtype=np.float64)
    signs = np.asarray(signs, dtype=np.float64)
    eta = rng.normal(0.0, sigma_p, size=(signs.size, mu.size))
    mu_sq = float(mu @ mu)
    if mu_sq > 0:
        eta -= np.outer(eta @ mu / mu_sq, mu)
    return np.concatenate([signs[:, None] * mu[None, :], eta], axis=1)


def generate_snm_sbm(cfg: SnmSbmConfig) -> Graph:
    """Two-class SNM-SBM graph. Class 0 carries y = -1, class 1 carries y = +1."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    labels = balanced_labels(cfg.n, 2, rng)
    x = snm_features(2 * labels - 1, cfg.mu, cfg.sigma_p, rng)
    prob = np.array([[cfg.p, cfg.s], [cfg.s, cfg.p]])
    edges = sample_sbm_edges(labels, prob, rng)
    return Graph.from_edges(cfg.n, edges, x, labels, 2)


@dataclass
class SbmConfig:
    """Multi-class SBM with Gaussian class-centroid features.

    Every class gets ``nodes_per_class`` nodes and a random centroid of norm
    ``feature_signal``; node features add isotropic noise of std ``feature_noise``.
    """

    num_classes: int = 5
    nodes_per_class: int = 500
    p_in: float = 0.01
    p_out: float = 0.002
    feature_dim: int = 32
    feature_signal: float = 1.0
    feature_noise: float = 1.0
    seed: int = 0

    def validate(self):
        if self.num_classes < 2 or self.nodes_per_class < 1:
            raise ValueError("need at least two classes and one node per class")
        if not (0.0 <= self.p_in <= 1.0 and 0.0 <= self.p_out <= 1.0):
            raise ValueError("edge probabilities must lie in [0, 1]")
        if self.feature_dim < 1 or self.feature_noise < 0:
            raise ValueError("feature_dim must be >= 1 and feature_noise >= 0")


def generate_sbm(cfg: SbmConfig) -> Graph:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_classes * cfg.nodes_per_class
    labels = balanced_labels(n, cfg.num_classes, rng)
    centroids = rng.normal(size=(cfg.num_classes, cfg.feature_dim))
    centroids *= cfg.feature_signal / np.linalg.norm(centroids, axis=1, keepdims=True)
    x = centroids[labels] + rng.normal(0.0, cfg.feature_noise, size=(n, cfg.feature_dim))
    prob = np.full((cfg.num_classes, cfg.num_classes), cfg.p_out)
    np.fill_diagonal(prob, cfg.p_in)
    edges = sample_sbm_edges(labels, prob, rng)
    return Graph.from_edges(n, edges, x, labels, cfg.num_classes)


# --- splits ------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass
class ImbalanceSpec:
    majority_per_class: int = 20
    imbalance_ratio: float = 0.1
    minority_class_ids: list = field(default_factory=list)
    val_per_class: int = 30
    test_per_class: int = 100

    @property
    def minority_count(self) -> int:
        return _round_half_up(self.majority_per_class * self.imbalance_ratio)

    def validate(self):
        if not 0.0 < self.imbalance_ratio <= 1.0:
            raise ValueError("imbalance_ratio must lie in (0, 1]")
        if self.minority_count < 1:
            raise ValueError(
                f"majority_per_class * imbalance_ratio rounds to {self.minority_count}; need >= 1"
            )


def sample_imbalanced_split(g: Graph, spec: ImbalanceSpec, seed) -> Graph:
    """Stratified train/val/test masks with reduced training quotas for minority classes."""
    spec.validate()
    rng = np.random.default_rng(seed)
    minority = set(int(c) for c in spec.minority_class_ids)
    if any(c < 0 or c >= g.num_classes for c in minority):
        raise ValueError("minority class id out of range")
    train = np.zeros(g.num_nodes, dtype=bool)
    val = np.zeros_like(train)
    test = np.zeros_like(train)
    for c in range(g.num_classes):
        nodes = np.flatnonzero(g.labels == c)
        n_train = spec.minority_count if c in minority else spec.majority_per_class
        need = n_train + spec.val_per_class + spec.test_per_class
        if nodes.size < need:
            raise InsufficientNodesError(
                f"class {c} has {nodes.size} nodes, split needs {need}"
            )
        nodes = rng.permutation(nodes)
        train[nodes[:n_train]] = True
        val[nodes[n_train:n_train + spec.val_per_class]] = True
        test[nodes[n_train + spec.val_per_class:need]] = True
    return g.with_masks(train, val, test)


def sample_fraction_split(g: Graph, fractions, seed) -> Graph:
    """Random per-class split by fractions (train, val, test); leftovers stay unlabeled."""
    rng = np.random.default_rng(seed)
    train = np.zeros(g.num_nodes, dtype=bool)
    val = np.zeros_like(train)
    test = np.zeros_like(train)
    f_train, f_val, f_test = fractions
    if min(fractions) < 0 or f_train + f_val + f_test > 1 + 1e-12:
        raise ValueError("split fractions must be non-negative and sum to at most 1")
    for c in range(g.num_classes):
        nodes = rng.permutation(np.flatnonzero(g.labels == c))
        a = _round_half_up(f_train * nodes.size)
        b = a + _round_half_up(f_val * nodes.size)
        e = min(nodes.size, b + _round_half_up(f_test * nodes.size))
        train[nodes[:a]] = True
        val[nodes[a:b]] = True
        test[nodes[b:e]] = True
    return g.with_masks(train, val, test)


# --- distribution shift --------------------------------------------------------

SPURIOUS_NOISE = 0.1


def apply_spurious_shift(g: Graph, shift_strength: float, seed, variant="id",
                         noise=SPURIOUS_NOISE) -> Graph:
    """Append ``num_classes`` spurious feature columns.

    ``variant="id"``: label one-hot times ``shift_strength`` plus N(0, noise^2).
    ``variant="ood"``: label-independent Gaussian whose per-column mean and
    variance match the ID block's marginal. The original block is untouched.
    """
    if shift_strength < 0:
        raise ValueError("shift_strength must be >= 0")
    if variant not in ("id", "ood"):
        raise ValueError(f"variant must be 'id' or 'ood', got {variant!r}")
    rng = np.random.default_rng([int(seed), 0 if variant == "id" else 1])
    k = g.num_classes
    if variant == "id":
        onehot = np.eye(k)[g.labels]
        block = shift_strength * onehot + rng.normal(0.0, noise, size=(g.num_nodes, k))
    else:
        prior = np.bincount(g.labels, minlength=k) / max(g.num_nodes, 1)
        mean = shift_strength * prior
        std = np.sqrt(shift_strength ** 2 * prior * (1 - prior) + noise ** 2)
        block = mean + std * rng.normal(size=(g.num_nodes, k))
    return replace(g, features=np.concatenate([g.features, block], axis=1))


# --- over-sampling -------------------------------------------------------------

def ros_oversample(g: Graph, seed) -> Graph:
    """Random over-sampling: duplicate minority training nodes with their edges.

    Duplicates are appended after the original nodes, connect to exactly the
    original's neighbours, and join the training mask.
    """
    rng = np.random.default_rng(seed)
    counts = np.bincount(g.labels[g.train_mask], minlength=g.num_classes)
    if np.any(counts == 0):
        raise ValueError("every class needs at least one training node to over-sample")
    target = counts.max()
    sources = []
    for c in range(g.num_classes):
        need = target - counts[c]
        if need:
            pool = np.flatnonzero(g.train_mask & (g.labels == c))
            sources.append(rng.choice(pool, size=need, replace=True))
    if not sources:
        return g
    src = np.concatenate(sources)
    n = g.num_nodes
    new_ids = n + np.arange(src.size)
    adj = g.adjacency
    deg = np.diff(adj.row_ptr)
    dup_rows = np.repeat(new_ids, deg[src])
    dup_cols = np.concatenate([adj.col_idx[adj.row_ptr[v]:adj.row_ptr[v + 1]] for v in src])
    edges = np.concatenate([g.edge_list(), np.stack([dup_rows, dup_cols], axis=1)])
    pad = np.zeros(src.size, dtype=bool)
    return Graph.from_edges(
        n + src.size, edges,
        np.concatenate([g.features, g.features[src]]),
        np.concatenate([g.labels, g.labels[src]]),
        g.num_classes,
        np.concatenate([g.train_mask, np.ones(src.size, dtype=bool)]),
        np.concatenate([g.val_mask, pad]),
        np.concatenate([g.test_mask, pad]),
    )


# --- file I/O ------------------------------------------------------------------

_REQUIRED = ("num_nodes", "num_classes", "edges", "features", "labels")
_OPTIONAL = ("train_mask", "val_mask", "test_mask")


def graph_to_json(g: Graph) -> dict:
    doc = {
        "num_nodes": g.num_nodes,
        "num_classes": g.num_classes,
        "edges": g.edge_list().tolist(),
        "features": g.features.tolist(),
        "labels": g.labels.tolist(),
    }
    for name in _OPTIONAL:
        doc[name] = np.flatnonzero(getattr(g, name)).tolist()
    return doc


def graph_from_json(doc) -> Graph:
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    unknown = sorted(set(doc) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise GraphFormatError(f"unknown field(s): {', '.join(unknown)}")
    for name in _REQUIRED:
        if name not in doc:
            raise GraphFormatError(f"missing required field '{name}'")
    n, k = doc["num_nodes"], doc["num_classes"]
    for name, val in (("num_nodes", n), ("num_classes", k)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise GraphFormatError(f"field '{name}' must be a non-negative integer")

    def int_array(name, value, shape_hint):
        try:
            arr = np.asarray(value, dtype=np.int64) if value else np.zeros(shape_hint, dtype=np.int64)
        except (TypeError, ValueError) as exc:
            raise GraphFormatError(f"field '{name}': {exc}") from None
        if arr.size and not np.array_equal(arr, np.asarray(value, dtype=np.float64)):
            raise GraphFormatError(f"field '{name}' must contain integers")
        return arr

    edges = int_array("edges", doc["edges"], (0, 2))
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise GraphFormatError("field 'edges' must be a list of [u, v] pairs")
    for i, (u, v) in enumerate(edges):
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"field 'edges'[{i}] = [{u}, {v}] references a node outside [0, {n})")
        if u == v:
            raise GraphFormatError(f"field 'edges'[{i}] is a self-loop")
    try:
        feats = np.asarray(doc["features"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"field 'features': {exc}") from None
    if feats.ndim != 2 or feats.shape[0] != n:
        raise GraphFormatError(f"field 'features' must be {n} rows of equal length")
    if not np.all(np.isfinite(feats)):
        raise GraphFormatError("field 'features' contains non-finite values")
    labels = int_array("labels", doc["labels"], (0,))
    if labels.shape != (n,):
        raise GraphFormatError(f"field 'labels' must have {n} entries")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise GraphFormatError(f"field 'labels' has a class outside [0, {k})")
    masks = []
    for name in _OPTIONAL:
        m = np.zeros(n, dtype=bool)
        if name in doc:
            idx = int_array(name, doc[name], (0,))
            if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= n)):
                raise GraphFormatError(f"field '{name}' must list node indices in [0, {n})")
            m[idx] = True
        masks.append(m)
    return Graph.from_edges(n, edges, feats, labels, k, *masks)


def save_graph(g: Graph, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(graph_to_json(g)))


def load_graph(path) -> Graph:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return graph_from_json(doc)
    except GraphFormatError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None
