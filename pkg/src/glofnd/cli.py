"""Command-line entry points: train, oracle-check, sweep, eval.

Flags mirror the flat config keys; a ``--config`` file supplies the
base values and flags override it. On failure a machine-readable error
JSON is printed to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from .config import RunConfig, build_config, parse_config_file
from .errors import ConfigError
from .runner import run_eval, run_experiment, run_oracle_check, run_sweep


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        # all parsed as strings; build_config coerces and validates
        parser.add_argument(flag, dest=f.name, default=None, metavar="V")


def _collect_overrides(args: argparse.Namespace) -> dict:
    names = {f.name for f in fields(RunConfig)}
    return {name: value for name, value in vars(args).items()
            if name in names and value is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glofnd",
        description="Contrastive training with learned global "
                    "false-negative thresholds, on synthetic data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    _add_config_flags(p_train)

    p_oracle = sub.add_parser(
        "oracle-check",
        help="streaming threshold learning on frozen embeddings vs the "
             "exact oracle")
    _add_config_flags(p_oracle)

    p_sweep = sub.add_parser("sweep", help="grid of runs along one axis")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         choices=("alpha", "warmup_epoch", "batch_size"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")

    p_eval = sub.add_parser("eval", help="re-evaluate a finished run")
    p_eval.add_argument("--run-dir", required=True,
                        help="run directory containing config.json")
    return parser


def _build_cfg(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    return build_config(file_values, _collect_overrides(args))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            report = run_experiment(_build_cfg(args))
            print(json.dumps(report.to_dict()["evaluation"], sort_keys=True))
        elif args.command == "oracle-check":
            report = run_oracle_check(_build_cfg(args))
            print(json.dumps(report.to_dict(), sort_keys=True))
        elif args.command == "sweep":
            values = [v for v in args.values.split(",") if v]
            report = run_sweep(_build_cfg(args), args.axis, values)
            print(json.dumps({"axis": report.axis, "values": report.values,
                              "output_dir": report.output_dir},
                             sort_keys=True))
        elif args.command == "eval":
            summary = run_eval(args.run_dir)
            print(json.dumps(summary, sort_keys=True))
    except ConfigError as exc:
        json.dump({"error": "ConfigError", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except Exception as exc:  # contract: failures emit machine-readable JSON
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
