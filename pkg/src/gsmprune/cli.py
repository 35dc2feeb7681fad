"""Command-line entry point: ``gsmprune <command> --config PATH [...]``.

Exit codes: 0 success, 1 config error, 2 numeric failure or divergence,
3 IO or file-format error, 4 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config
from .errors import GsmPruneError

COMMANDS = ("train", "sample", "prune-sweep", "verify", "distill")


def build_parser():
    parser = argparse.ArgumentParser(prog="gsmprune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    needs = {
        "train": (),
        "sample": ("--net",),
        "prune-sweep": ("--net", "--moments"),
        "verify": (),
        "distill": ("--net",),
    }
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        for flag in needs[name]:
            p.add_argument(flag, required=True)
    return parser


def run(args):
    cfg = load_config(args.config, seed=args.seed)
    out = args.out if args.out is not None else cfg.resolve(cfg.output_dir)
    if args.command == "train":
        res = pipeline.cmd_train(cfg, out)
        print(f"wrote {res['network']} and {res['log']}; final validation metric {res['final_metric']:.6g}")
    elif args.command == "sample":
        res = pipeline.cmd_sample(cfg, args.net, out)
        print(f"wrote {res['moments']} and {res['scatter']}")
    elif args.command == "prune-sweep":
        for rule, frac in pipeline.cmd_prune_sweep(cfg, args.net, args.moments, out).items():
            print(f"breakdown[{rule}] = {frac:.6g}")
    elif args.command == "verify":
        results = pipeline.cmd_verify(cfg, out)
        print(f"all {len(results)} verification checks passed")
    else:
        points = pipeline.cmd_distill(cfg, args.net, out)
        for p in points:
            print(f"distill fraction_pruned={p.fraction_pruned:.6g} {p.metric_name}={p.metric_value:.6g}")


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except GsmPruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
