"""Command-line entry point: ``loiu <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import config as cfgmod
from . import harness
from .maddpg import overhead_report


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _common(p):
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--preset", help=f"named preset ({', '.join(cfgmod.PRESETS)})")
    p.add_argument("--seeds", type=_ints, help="comma-separated seed list")
    p.add_argument("--output", help="output directory")
    p.add_argument("--policies", type=_names, help="comma-separated policy list")
    p.add_argument("--workers", type=int, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loiu", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train learned schedulers, evaluate every policy, write results")
    _common(p)

    p = sub.add_parser("evaluate", help="evaluate fixed policies (and saved proposed actors) without training")
    _common(p)
    p.add_argument("--checkpoints", help="directory holding seed=<n>/actor_<m>.npz from a train run")

    p = sub.add_parser("sweep", help="one run per value of a team-size axis")
    _common(p)
    p.add_argument("--axis", required=True, choices=sorted(harness.SWEEP_AXES))
    p.add_argument("--values", required=True, type=_ints)

    p = sub.add_parser("compare-metrics", help="task reliability per (method, metric)")
    _common(p)
    p.add_argument("--metrics", type=_names, default=cfgmod.METRICS)
    p.add_argument("--methods", type=_names)

    p = sub.add_parser("overhead", help="per-slot training traffic, semi-decentralized vs traditional")
    p.add_argument("--robots", type=int, required=True)
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--beta-o", type=float, required=True)
    p.add_argument("--beta-a", type=float, required=True)
    p.add_argument("--beta-r", type=float, required=True)
    p.add_argument("--beta-p", type=float, required=True)
    p.add_argument("--output", help="write the report here as JSON")

    p = sub.add_parser("emit-plots", help="write plot data and a matplotlib script from saved results")
    p.add_argument("inputs", nargs="+", help="result directories written by train/evaluate/sweep")
    p.add_argument("--output", required=True)
    return ap


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config, args.preset)
    over = {}
    if args.seeds:
        over["seeds"] = args.seeds
    if args.output:
        over["output_dir"] = args.output
    if args.policies:
        over["policies"] = args.policies
    if args.workers:
        over["workers"] = args.workers
    return cfg.replace(**over).validate() if over else cfg


def _print_aggregate(bundle):
    for p, stats in bundle.aggregate.items():
        parts = []
        for k in ("mean_loiu", "task_reliability", "transmission_reliability"):
            mean = stats[k]["mean"]
            parts.append(f"{k}=" + ("n/a" if mean is None else f"{mean:.4g}"))
        print(f"{p:14s} " + " ".join(parts))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "overhead":
            r = overhead_report(args.robots, args.batch, args.beta_o, args.beta_a, args.beta_r, args.beta_p)
            text = json.dumps(r.to_dict(), indent=2, sort_keys=True)
            if args.output:
                os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
                with open(args.output, "w") as fh:
                    fh.write(text + "\n")
            print(text)
            return 0
        if args.command == "emit-plots":
            bundles = [harness.load_bundle(d) for d in args.inputs]
            for path in harness.emit_plots(bundles, args.output):
                print(path)
            return 0
        cfg = _load(args)
        if args.command == "train":
            bundle = harness.run(cfg, label="train")
            _print_aggregate(bundle)
        elif args.command == "evaluate":
            bundle = harness.evaluate(cfg, checkpoint_root=args.checkpoints)
            _print_aggregate(bundle)
        elif args.command == "sweep":
            for b in harness.sweep(cfg, args.axis, args.values):
                print(f"[{b.label}]")
                _print_aggregate(b)
        elif args.command == "compare-metrics":
            methods = args.methods or cfg.policies
            result = harness.compare_metrics(cfg, args.metrics, methods)
            print(harness.format_table(result), end="")
        print(f"results in {cfg.output_dir}")
        return 0
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
