"""Command-line entry point.

    nodereg <subcommand> [--config PATH] [--out DIR] [--seed N] [--workers N] [--verbose]

Exit codes: 0 success, 1 usage or config/validation error, 2 runtime failure.
Every file lands under ``--out`` (written atomically) next to a ``manifest.json``
holding the resolved config, seeds and versions. A manifest is itself accepted
as ``--config``, which reruns the recorded configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from .checks import gradient_suite, property_suite
from .config import ConfigError, ExperimentConfig, GenConfig, load_config, to_dict
from .experiments import (
    build_graph, run_gamma_sweep, run_imbalance_experiment, run_ood_experiment, run_snr_experiment,
)
from .graph import (
    GraphFormatError, ImbalanceSpec, InsufficientNodesError, generate_sbm, generate_snm_sbm,
    sample_fraction_split, sample_imbalanced_split, save_graph,
)
from .io import atomic_write_csv, atomic_write_json, write_manifest
from .model import forward, load_params, save_params
from .training import evaluate, export_embeddings, normalized_adjacency, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("nodereg")


class UsageError(Exception):
    """Bad command line (beyond what argparse catches)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (or a run manifest)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="N", help="override the seed list with one seed")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker processes for experiment sweeps")
    common.add_argument("--verbose", action="store_true", help="debug logging on stderr")

    parser = _Parser(prog="nodereg", description="NodeReg graph-learning lab.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "gen": "generate a synthetic graph (graph.json)",
        "train": "train one model (checkpoint.json, history.csv, metrics.json)",
        "eval": "evaluate a checkpoint (eval.json)",
        "imbalance": "imbalance-ratio sweep (results.csv, summary.json)",
        "ood": "spurious-shift OOD benchmark (results.csv, summary.json)",
        "snr": "signal-to-noise population study (results.csv, summary.json)",
        "gamma-sweep": "gamma sensitivity (results.csv, summary.json)",
        "export-emb": "logit embeddings with norms and PCA coordinates (embeddings.csv)",
        "gradcheck": "finite-difference gradient oracle suite",
        "proptest": "smooth-L1 Lipschitz fuzzing and simplex-frame spectra",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name in ("eval", "export-emb"):
            p.add_argument("--checkpoint", metavar="PATH",
                           help="checkpoint JSON" + (" (trains one if omitted)" if name == "export-emb" else ""))
        if name == "proptest":
            p.add_argument("--pairs", type=int, default=100_000, metavar="N", help="fuzz pairs per gamma")
        if name == "gradcheck":
            p.add_argument("--instances", type=int, default=50, metavar="N", help="instances per loss")
    return parser


# --- helpers ---------------------------------------------------------------------

def _config(args, cls=ExperimentConfig):
    cfg = cls() if args.config is None else load_config(args.config, cls)
    if cls is ExperimentConfig:
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seeds=[args.seed])
        cfg.validate()
        return cfg
    if args.seed is not None:
        cfg.sbm = dataclasses.replace(cfg.sbm, seed=args.seed)
        if cfg.snm_sbm is not None:
            cfg.snm_sbm = dataclasses.replace(cfg.snm_sbm, seed=args.seed)
        cfg.split_seed = args.seed
    return cfg


def _out(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command} needs --out DIR")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _labelled_graph(cfg: ExperimentConfig, seed):
    """The configured graph; without stored masks, an imbalanced split at the first ratio."""
    g = build_graph(cfg)
    if g.train_mask.any():
        return g
    ic = cfg.imbalance
    spec = ImbalanceSpec(ic.majority_per_class, ic.ratios[0], list(ic.minority_class_ids),
                         ic.val_per_class, ic.test_per_class)
    return sample_imbalanced_split(g, spec, seed)


def _finish(out, args, cfg, seeds, outputs, inputs=None):
    write_manifest(out, args.command, to_dict(cfg), seeds, outputs, inputs)
    log.info("wrote %s and manifest.json to %s", ", ".join(outputs), out)


def _write_table(out, table):
    atomic_write_csv(out / "results.csv", table.columns, table.rows)
    atomic_write_json(out / "summary.json", table.summary())
    return ["results.csv", "summary.json"]


# --- subcommands -------------------------------------------------------------------

def cmd_gen(args):
    cfg = _config(args, GenConfig)
    out = _out(args)
    if cfg.generator == "snm_sbm":
        g = generate_snm_sbm(cfg.snm_sbm)
        graph_seed = cfg.snm_sbm.seed
    else:
        g = generate_sbm(cfg.sbm)
        graph_seed = cfg.sbm.seed
    if cfg.split == "imbalance":
        ic = cfg.imbalance
        g = sample_imbalanced_split(g, ImbalanceSpec(
            ic.majority_per_class, cfg.imbalance_ratio, list(ic.minority_class_ids),
            ic.val_per_class, ic.test_per_class), cfg.split_seed)
    elif cfg.split == "fraction":
        g = sample_fraction_split(g, cfg.fractions, cfg.split_seed)
    save_graph(g, out / "graph.json")
    _finish(out, args, cfg, [graph_seed, cfg.split_seed], ["graph.json"])
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    out = _out(args)
    seed = cfg.seeds[0]
    g = _labelled_graph(cfg, seed)
    r = train(cfg, g, seed)
    save_params(r.params, out / "checkpoint.json")
    atomic_write_csv(out / "history.csv", ["epoch", "train_loss", "val_loss"],
                     [(i + 1, a, b) for i, (a, b) in enumerate(zip(r.train_loss, r.val_loss))])
    atomic_write_json(out / "metrics.json", {
        "seed": seed, "variant": r.variant, "best_epoch": r.best_epoch,
        "test_accuracy": r.test_accuracy, "test_macro_f1": r.test_macro_f1,
        "test_macro_auc": r.test_macro_auc, "auc_excluded": r.auc_excluded, "norms": r.norms,
    })
    log.info("seed %s %s: test accuracy %.4f, macro-F1 %.4f", seed, r.variant,
             r.test_accuracy, r.test_macro_f1)
    _finish(out, args, cfg, [seed], ["checkpoint.json", "history.csv", "metrics.json"])
    return EXIT_OK


def _checkpoint(args):
    try:
        return load_params(args.checkpoint)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"checkpoint {args.checkpoint}: {exc}") from None


def cmd_eval(args):
    if not args.checkpoint:
        raise UsageError("eval needs --checkpoint PATH")
    cfg = _config(args)
    out = _out(args)
    seed = cfg.seeds[0]
    g = _labelled_graph(cfg, seed)
    params = _checkpoint(args)
    report = {name: evaluate(params, g, cfg.model.normalization, mask)
              for name, mask in (("val", g.val_mask), ("test", g.test_mask)) if mask.any()}
    atomic_write_json(out / "eval.json", {"seed": seed, **report})
    _finish(out, args, cfg, [seed], ["eval.json"],
            {"checkpoint": str(Path(args.checkpoint).resolve())})
    return EXIT_OK


def cmd_export_emb(args):
    cfg = _config(args)
    out = _out(args)
    seed = cfg.seeds[0]
    g = _labelled_graph(cfg, seed)
    inputs = {}
    if args.checkpoint:
        params = _checkpoint(args)
        inputs["checkpoint"] = str(Path(args.checkpoint).resolve())
    else:
        params = train(cfg, g, seed).params
    z = forward(params, normalized_adjacency(g, cfg.model.normalization), g.features).z
    export_embeddings(out / "embeddings.csv", z, g)
    _finish(out, args, cfg, [seed], ["embeddings.csv"], inputs)
    return EXIT_OK


def _sweep(runner):
    def command(args):
        cfg = _config(args)
        out = _out(args)
        table = runner(cfg, workers=args.workers)
        _finish(out, args, cfg, cfg.seeds, _write_table(out, table))
        return EXIT_OK
    return command


def _report(args, name, results, extra):
    for r in results:
        print(r.line(), file=sys.stderr)
    ok = all(r.passed for r in results)
    if args.out:
        out = _out(args)
        atomic_write_json(out / f"{name}.json", {
            "passed": ok, **extra,
            "checks": [dataclasses.asdict(r) for r in results],
        })
        write_manifest(out, args.command, extra, [extra["seed"]], [f"{name}.json"])
    if not ok:
        log.error("%d of %d checks failed", sum(not r.passed for r in results), len(results))
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_gradcheck(args):
    seed = 0 if args.seed is None else args.seed
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    return _report(args, "gradcheck", gradient_suite(args.instances, seed),
                   {"seed": seed, "instances": args.instances})


def cmd_proptest(args):
    seed = 0 if args.seed is None else args.seed
    if args.pairs < 1:
        raise UsageError("--pairs must be >= 1")
    return _report(args, "proptest", property_suite(args.pairs, seed),
                   {"seed": seed, "pairs": args.pairs})


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "imbalance": _sweep(run_imbalance_experiment),
    "ood": _sweep(run_ood_experiment),
    "snr": _sweep(run_snr_experiment),
    "gamma-sweep": _sweep(run_gamma_sweep),
    "export-emb": cmd_export_emb,
    "gradcheck": cmd_gradcheck,
    "proptest": cmd_proptest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True,
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nodereg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, GraphFormatError, InsufficientNodesError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: divergence, I/O, numerical trouble
        log.error("%s: %s", type(exc).__name__, exc)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
