"""Command line entry point: ``lqr-rl run`` and ``lqr-rl metrics``."""
import argparse
import csv
import logging
import sys

from ..errors import ConfigError, LqrRlError
from .config import ExperimentConfig, load_config
from .metrics import summarize
from .outputs import SUMMARY_HEADER, emit_outputs, read_curves, summary_row
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="lqr-rl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train agents and write curves/summary CSVs")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--env")
    run.add_argument("--agent")
    run.add_argument("--runs", type=int)
    run.add_argument("--episodes", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--threshold", type=float)
    run.add_argument("--out")
    run.add_argument("--dump-lqr", action="store_true", help="write A, B, E, P, F, a_ff per refit")
    run.add_argument("--plot", action="store_true", help="also write curves.png")

    met = sub.add_parser("metrics", help="recompute rise time / end performance from curves.csv")
    met.add_argument("--curves", required=True)
    met.add_argument("--threshold", type=float, required=True)
    met.add_argument("--agent", default="")
    met.add_argument("--env", default="")
    return p


def _run(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    for key in ("env", "agent", "runs", "episodes", "seed", "workers", "threshold", "out"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    if args.dump_lqr:
        cfg.dump_lqr = True
    ExperimentConfig.__post_init__(cfg)
    curves, stats = run_experiment(cfg)
    emit_outputs(curves, stats, cfg.out, cfg.agent, cfg.env, plot=args.plot,
                 threshold=cfg.rise_threshold)
    print(f"{cfg.agent} on {cfg.env}: rise {stats.rise_mean:.1f} +- {stats.rise_hw:.1f} s "
          f"({stats.censored_count} censored), end {stats.end_mean:.2f} +- {stats.end_hw:.2f}")
    if stats.failed_runs:
        print(f"failed runs excluded: {stats.failed_runs}", file=sys.stderr)
    return EXIT_OK


def _metrics(args):
    stats = summarize(read_curves(args.curves), args.threshold)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    w.writerow(summary_row(args.agent, args.env, stats))
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return _run(args) if args.command == "run" else _metrics(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LqrRlError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
