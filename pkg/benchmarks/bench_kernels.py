"""Compiled vs numpy kernel backends: spmm, Jacobi eigenvalues, one training epoch.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Prints one line per (workload, backend) with the best-of-N time, and the
speedup of each backend relative to the numpy fallback.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from nodereg import _kernels, set_backend
from nodereg.config import ExperimentConfig
from nodereg.graph import ImbalanceSpec, SbmConfig, generate_sbm, sample_imbalanced_split
from nodereg.linalg import spmm, symmetric_eigenvalues
from nodereg.training import normalized_adjacency, train


def workloads():
    g = generate_sbm(SbmConfig(5, 2000, 0.005, 0.001, 64, 1.0, 1.0, seed=0))
    a_hat = normalized_adjacency(g, "symmetric")
    h = np.random.default_rng(0).normal(size=(g.num_nodes, 64))
    m = np.random.default_rng(1).normal(size=(40, 40))
    m = m + m.T
    small = sample_imbalanced_split(generate_sbm(SbmConfig(5, 500, 0.03, 0.006, 32, seed=0)),
                                    ImbalanceSpec(20, 0.1, [2, 3, 4]), 0)
    cfg = ExperimentConfig(epochs=1)
    return {
        f"spmm n={g.num_nodes} nnz={a_hat.nnz} d=64": lambda: spmm(a_hat, h),
        "jacobi eigenvalues 40x40": lambda: symmetric_eigenvalues(m),
        "train one epoch n=2500 (ce+nodereg)": lambda: train(cfg, small, 0, "ce+nodereg"),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--json", metavar="PATH", help="also write the timings as JSON")
    args = parser.parse_args(argv)

    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is timed", file=sys.stderr)
    results = {}
    prev = _kernels.get_backend()
    try:
        for name, fn in workloads().items():
            results[name] = {}
            for backend in backends:
                set_backend(backend)
                fn()  # warm-up
                number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
                best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
                results[name][backend] = best
            base = results[name]["python"]
            for backend, t in results[name].items():
                print(f"{name:45s} {backend:7s} {t * 1e3:10.3f} ms  x{base / t:6.2f}")
    finally:
        set_backend(prev)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
