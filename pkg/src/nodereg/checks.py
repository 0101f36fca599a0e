"""Numerical self-checks: smooth-L1 Lipschitz fuzzing, gradient oracles, simplex-frame spectra.

These back the ``gradcheck`` and ``proptest`` subcommands and the acceptance suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .linalg import symmetric_eigenvalues
from .losses import (
    CenterState, NodeRegConfig, SclConfig, center_loss, cross_entropy, l_bound_loss,
    nodereg_loss, scl_loss, smooth_l1,
)
from .model import GcnParams, backward, forward, init_params
from .optim import finite_diff_check
from .training import normalized_adjacency

FUZZ_GAMMAS = (1e-4, 1e-2, 1e-1, 1.0)
FUZZ_LOW, FUZZ_HIGH = -10.0, 1.0
SLACK = 1e-12
GRAD_TOL = {"ce": 1e-5, "nodereg": 1e-5, "l_bound": 1e-5, "center": 1e-5, "scl": 1e-4,
            "gcn_ce": 1e-5, "gcn_nodereg": 1e-5}


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3g} (limit {self.limit:.3g}) {self.detail}".rstrip()


def fuzz_pairs(count=100_000, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.uniform(FUZZ_LOW, FUZZ_HIGH, size=(2, count))
    return d[0], d[1]


def lipschitz_fuzz(count=100_000, gammas=FUZZ_GAMMAS, seed=0) -> list:
    """Value is 1-Lipschitz and the derivative (1/gamma)-Lipschitz on random pairs."""
    d1, d2 = fuzz_pairs(count, seed)
    gap = np.abs(d1 - d2)
    out = []
    for gamma in gammas:
        v1, g1 = smooth_l1(d1, gamma)
        v2, g2 = smooth_l1(d2, gamma)
        excess_v = np.abs(v1 - v2) - gap
        excess_g = np.abs(g1 - g2) - gap / gamma
        out.append(CheckResult(f"value lipschitz gamma={gamma:g}", bool(np.all(excess_v <= SLACK)),
                               float(excess_v.max()), SLACK, f"{count} pairs"))
        out.append(CheckResult(f"gradient lipschitz gamma={gamma:g}", bool(np.all(excess_g <= SLACK)),
                               float(excess_g.max()), SLACK, f"{count} pairs"))
    return out


def l_bound_delta_derivative(delta, mean_norm=1.0):
    """Per-node derivative of F^-1 * delta^2 in delta."""
    return 2.0 * np.asarray(delta) / mean_norm


def unboundedness_witness(count=100_000, gammas=FUZZ_GAMMAS, seed=0) -> list:
    """The squared-deviation bound has derivatives above 1 where smooth-L1 tops out at 1."""
    d1, d2 = fuzz_pairs(count, seed)
    deltas = np.concatenate([d1, d2])
    lb = float(np.abs(l_bound_delta_derivative(deltas)).max())
    sl = max(float(np.abs(smooth_l1(deltas, g)[1]).max()) for g in gammas)
    return [
        CheckResult("l_bound derivative exceeds 1", lb > 1.0, lb, 1.0),
        CheckResult("smooth_l1 derivative peaks at exactly 1", sl == 1.0, sl, 1.0),
    ]


def simplex_etf(c, scale=1.0, seed=0) -> np.ndarray:
    """``c`` equal-norm, maximally separated rows in R^c, randomly rotated."""
    m = np.eye(c) - np.full((c, c), 1.0 / c)
    m *= scale / np.linalg.norm(m[0])
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(c, c)))
    return m @ q


def etf_spectrum_check(c, seed=0, equal_tol=1e-8, rest_tol=1e-10) -> CheckResult:
    """Top c-1 eigenvalues of Z^T Z coincide; the remaining one vanishes."""
    z = simplex_etf(c, seed=seed)
    ev = symmetric_eigenvalues(z.T @ z)
    top, rest = ev[:c - 1], ev[c - 1:]
    spread = float(top.max() - top.min())
    tail = float(np.abs(rest).max()) if rest.size else 0.0
    ok = spread <= equal_tol and tail <= rest_tol
    return CheckResult(f"simplex ETF c={c}", ok, spread, equal_tol, f"tail {tail:.2e}")


# --- gradient oracles ------------------------------------------------------------

def _random_instance(rng, need_pairs=False):
    n = int(rng.integers(6, 13))
    k = int(rng.integers(3, 6))
    z = rng.normal(size=(n, k)) * rng.uniform(0.5, 3.0)
    labels = rng.integers(0, k, size=n)
    mask = rng.random(n) < 0.7
    mask[:4] = True
    if need_pairs:
        # two masked classes, each with at least two members, so every anchor has a positive
        idx = np.flatnonzero(mask)
        labels[idx] = rng.integers(0, 2, size=idx.size)
        labels[idx[:4]] = (0, 0, 1, 1)
    return z, labels, mask


def _loss_instance(kind, rng):
    z, labels, mask = _random_instance(rng, need_pairs=kind == "scl")
    if kind == "ce":
        w = rng.uniform(0.5, 2.0, size=z.shape[1]) if rng.random() < 0.5 else None
        fn = lambda p: _pair(cross_entropy(p, labels, mask, w))
    elif kind == "nodereg":
        cfg = NodeRegConfig(gamma=float(10 ** rng.uniform(-3, 0)), weight=float(rng.uniform(0.5, 2)))
        f_bar = float(np.linalg.norm(z[mask], axis=1).mean())
        fn = lambda p: _pair(nodereg_loss(p, cfg, mask, mean_norm=f_bar))
    elif kind == "l_bound":
        f_bar = float(np.linalg.norm(z[mask], axis=1).mean())
        fn = lambda p: _pair(l_bound_loss(p, mask, mean_norm=f_bar))
    elif kind == "center":
        state = CenterState(rng.normal(size=(z.shape[1], z.shape[1])))
        fn = lambda p: _pair(center_loss(p, labels, mask, state)[0])
    elif kind == "scl":
        cfg = SclConfig(tau=float(rng.uniform(0.2, 1.0)))
        fn = lambda p: _pair(scl_loss(p, labels, mask, cfg))
    else:
        raise ValueError(kind)
    return fn, z


def _pair(report):
    return report.value, report.dz


def _small_graph(rng, n=8, k=3, f=5):
    labels = rng.integers(0, k, size=n)
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < 0.4
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    x = rng.normal(size=(n, f))
    train = rng.random(n) < 0.6
    train[0] = True
    return Graph.from_edges(n, edges, x, labels, k, train, np.zeros(n, bool), np.zeros(n, bool))


def _gcn_instance(kind, rng, seed):
    g = _small_graph(rng)
    a_hat = normalized_adjacency(g, "symmetric")
    params = init_params(g.feature_dim, 4, g.num_classes, seed, bias=True)
    params = GcnParams.from_dict({k: v + rng.normal(scale=0.1, size=v.shape)
                                  for k, v in params.as_dict().items()})
    cfg = NodeRegConfig(gamma=0.05, weight=1.0)
    scope = np.ones(g.num_nodes, dtype=bool)
    f_bar = float(np.linalg.norm(forward(params, a_hat, g.features).z, axis=1).mean())

    def fn(pd):
        p = GcnParams.from_dict(pd)
        cache = forward(p, a_hat, g.features)
        rep = cross_entropy(cache.z, g.labels, g.train_mask)
        value, dz = rep.value, rep.dz
        if kind == "gcn_nodereg":
            reg = nodereg_loss(cache.z, cfg, scope, mean_norm=f_bar)
            value, dz = value + reg.value, dz + reg.dz
        return value, backward(cache, p, dz).as_dict()

    return fn, params.as_dict()


def gradient_suite(instances=50, seed=0, kinds=tuple(GRAD_TOL)) -> list:
    """Worst relative finite-difference error per loss over random small instances."""
    out = []
    for kind in kinds:
        rng = np.random.default_rng([seed, list(GRAD_TOL).index(kind)])
        worst = 0.0
        for i in range(instances):
            if kind.startswith("gcn_"):
                fn, params = _gcn_instance(kind, rng, i)
            else:
                fn, params = _loss_instance(kind, rng)
            worst = max(worst, finite_diff_check(fn, params, seed=i))
        out.append(CheckResult(f"gradient {kind}", worst <= GRAD_TOL[kind], worst, GRAD_TOL[kind],
                               f"{instances} instances"))
    return out


def property_suite(count=100_000, seed=0) -> list:
    return [*lipschitz_fuzz(count, seed=seed), *unboundedness_witness(count, seed=seed),
            *(etf_spectrum_check(c, seed) for c in (3, 4, 7))]
