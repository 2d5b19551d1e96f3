"""Command-line front end: config parsing, experiment dispatch, output files.

Subcommands: rate-sweep, spacing-sweep, ber, cp-enum, selftest.  Each
experiment writes a CSV (versioned schema header), a JSON summary and a PNG
figure into the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .config import RunConfig, dump_config, load_config
from .harness import (ExperimentPlan, RateReport, run_ber, run_cp_enum,
                      run_rate_sweep, run_spacing_sweep, selftest)
from .report import render

SUBCOMMAND_KINDS = {
    "rate-sweep": "rate-vs-snr",
    "spacing-sweep": "rate-vs-spacing",
    "ber": "ber",
    "cp-enum": "cp-enum",
}
RUNNERS = {
    "rate-vs-snr": run_rate_sweep,
    "rate-vs-spacing": run_spacing_sweep,
    "ber": run_ber,
    "cp-enum": run_cp_enum,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmc-cellfree",
        description="Link-level rate/BER evaluation of multi-tap precoded "
                    "FBMC/OQAM in a cell-free distributed MIMO downlink.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(SUBCOMMAND_KINDS) + ["selftest"]:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for trial parallelism")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective config and exit")
    return parser


def effective_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def write_outputs(report: RateReport, out_dir: str, stem: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, stem + ".csv"), "w") as fh:
        fh.write(report.to_csv())
    with open(os.path.join(out_dir, stem + ".json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    render(report, out_dir, stem)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        print(dump_config(cfg), end="")
        return 0
    if args.command == "selftest":
        checks = selftest(cfg)
        ok = True
        for name, passed, detail in checks:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
            ok = ok and passed
        return 0 if ok else 1
    kind = SUBCOMMAND_KINDS[args.command]
    plan = ExperimentPlan(kind, cfg)
    try:
        report = RUNNERS[kind](plan)
    except ValueError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return 1
    stem = args.command.replace("-", "_")
    write_outputs(report, args.out, stem)
    print(json.dumps(report.summary(), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
