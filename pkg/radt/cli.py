"""Command-line entry point: ``radt generate|train|evaluate|ablate|report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence

from radt.__version__ import __version__
from radt.exceptions import InvariantViolation, RadtException
from radt.harness import (
    ABLATIONS,
    PRESETS,
    Method,
    StageTimer,
    generate,
    load_config,
    report,
    run_ablation,
    run_experiment,
    train_seeds,
)
from radt.policy import DecodeMode


__all__ = ("build_parser", "main")

_LOGGER = logging.getLogger("radt.cli")

EXIT_ERROR = 1
EXIT_INVARIANT = 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON experiment document applied on top of the preset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--name", help="run name used for result files")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured ones")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--trials", type=int, help="in-context trials per task")
    p.add_argument("--cadence", type=int, help="retrieve every N environment steps")
    p.add_argument("--alpha", type=float, help="weight of the utility term when reweighting")
    p.add_argument("--decode", choices=[m.value for m in DecodeMode])
    p.add_argument("--temperature", type=float)
    p.add_argument("--workers", type=int, help="worker threads for collection and evaluation")
    p.add_argument("--output-dir")
    p.add_argument("--time", action="store_true", help="log wall-clock time per stage")
    p.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radt",
        description="Retrieval-augmented decision transformers on dark grid worlds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("generate", parents=[common], help="collect the Q-learning dataset")
    sub.add_parser("train", parents=[common], help="train one policy per seed")
    sub.add_parser("evaluate", parents=[common], help="train if needed, evaluate and export results")
    ablate = sub.add_parser("ablate", parents=[common], help="run an ablation preset")
    ablate.add_argument("--ablate", dest="ablation", required=True, choices=sorted(ABLATIONS))
    rep = sub.add_parser("report", parents=[common], help="summarize exported results")
    rep.add_argument("--results-dir", help="defaults to <output_dir>/results")
    return parser


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.preset).with_overrides(
        name=args.name,
        seed=args.seed,
        method=args.method,
        trials=args.trials,
        cadence=args.cadence,
        alpha=args.alpha,
        decode=args.decode,
        temperature=args.temperature,
        workers=args.workers,
        output_dir=args.output_dir,
    )
    timer = StageTimer() if args.time else None

    if args.command == "generate":
        manifest = generate(config, config.evaluation.workers, timer)
        _LOGGER.info("Dataset with %d task(s) written to %s", len(manifest.tasks), config.dataset.path)
    elif args.command == "train":
        for seed, result in train_seeds(config, timer=timer).items():
            _LOGGER.info("seed %d: %s (digest %s)", seed, result.checkpoint, result.digest)
    elif args.command == "evaluate":
        curve = run_experiment(config, timer=timer)
        _LOGGER.info("%s: final trial mean %.2f", config.name, curve.final_mean())
    elif args.command == "ablate":
        for name, curve in run_ablation(config, args.ablation, timer=timer).items():
            _LOGGER.info("%s: final trial mean %.2f", name, curve.final_mean())
    elif args.command == "report":
        summary = report(args.results_dir or config.results_dir)
        json.dump(summary["gates"], sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")

    if timer is not None:
        timer.report()
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except InvariantViolation as e:
        _LOGGER.error("Invariant violated: %s", e)
        return EXIT_INVARIANT
    except RadtException as e:
        _LOGGER.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
