"""Command-line harness: simulate / pretrain / compare / convergence / validate-config.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (NaN/Inf
reached a parameter during training).
"""
import argparse
import json
import sys

from .harness import (
    ConfigError,
    compare,
    convergence_report,
    curve_from_episode_csv,
    load_config,
    pretrain,
    run_experiment,
)
from .neural import NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _overrides(args):
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.trials is not None:
        out["trials"] = args.trials
    return out


def cmd_simulate(args):
    config = load_config(args.config, _overrides(args))
    result = run_experiment(config, out_dir=args.out, workers=args.workers)
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_pretrain(args):
    config = load_config(args.config, _overrides(args))
    out_dir = args.checkpoint or args.out or "."
    report = pretrain(config, args.target, out_dir)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_compare(args):
    configs = [load_config(path, _overrides(args)) for path in args.config]
    report = compare(configs, workers=args.workers)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        import os

        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_convergence(args):
    try:
        curve = curve_from_episode_csv(args.curve)
        report = convergence_report(curve, tolerance=args.tolerance, window=args.window)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"curve: {exc}") from exc
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_validate_config(args):
    load_config(args.config)
    print("ok")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rachsim",
        description="Framed-ALOHA random-access simulator and optimization workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_nargs=None):
        if config_nargs:
            p.add_argument("--config", required=True, action="append", help="config JSON path (repeatable)")
        else:
            p.add_argument("--config", required=True, help="config JSON path")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--trials", type=int, default=None, help="override the trial count")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="trial worker processes")

    p = sub.add_parser("simulate", help="run an experiment and export CSV metrics")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pretrain", help="offline-train the corrector or the agents")
    common(p)
    p.add_argument("--target", required=True, choices=("dnn_corrector", "dqn_agent"))
    p.add_argument("--checkpoint", default=None, help="checkpoint output directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("compare", help="paired comparison of two or more configs")
    common(p, config_nargs="append")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("convergence", help="episodes-to-converge from an episode CSV")
    p.add_argument("--curve", required=True, help="episode CSV (training run)")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--window", type=int, default=10)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("validate-config", help="parse and validate a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate_config)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
