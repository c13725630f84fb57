"""Command-line entry point.

Subcommands mirror the pipeline stages; one JSON config drives everything
and --seed/--out override the matching config keys. Exit codes: 0 ok,
2 config error, 3 data error, 4 convergence error.
"""

import argparse
import json
import sys

from . import __version__, _kernels
from .config import load_config
from .errors import ConfigError, ConvergenceError, CropmaskError
from .pipeline import (stage_evaluate, stage_featurize, stage_folds,
                       stage_importance, stage_predict, stage_preprocess,
                       stage_profile, stage_rasterize_labels, stage_train,
                       stage_variogram)

STAGES = ("preprocess", "featurize", "rasterize-labels", "folds", "train",
          "evaluate", "importance", "predict", "variogram", "profile")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cropmask",
        description="Cropland mapping from satellite image time series")
    parser.add_argument("--version", action="version",
                        version=f"cropmask {__version__} "
                                f"({_kernels.BACKEND} kernels)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=None,
                        help="override cv.seed")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads where a stage parallelizes")
    common.add_argument("--out", default=None, help="override paths.out_dir")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, parents=[common],
                           help=f"run the {name} stage")
        if name == "predict":
            p.add_argument("--strip-height", type=int, default=None,
                           help="rows per processing strip")
    return parser


def _dispatch(args, cfg):
    if args.command == "preprocess":
        return stage_preprocess(cfg)
    if args.command == "rasterize-labels":
        return stage_rasterize_labels(cfg)
    if args.command == "featurize":
        return stage_featurize(cfg)
    if args.command == "folds":
        return stage_folds(cfg)
    if args.command == "train":
        return stage_train(cfg, n_threads=args.threads)
    if args.command == "evaluate":
        return stage_evaluate(cfg, n_threads=args.threads)
    if args.command == "importance":
        return stage_importance(cfg, n_threads=args.threads)
    if args.command == "predict":
        return stage_predict(cfg, n_threads=args.threads,
                             strip_height=args.strip_height)
    if args.command == "variogram":
        return stage_variogram(cfg)
    if args.command == "profile":
        return stage_profile(cfg)
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        summary = _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return 4
    except CropmaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"{args.command}: {json.dumps(summary, default=str)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
