#!/usr/bin/python3

import argparse
import json
import logging
import pathlib
import sys

import isr
import isr.api
from isr.sweep import to_json, write_csv

logger = logging.getLogger(__name__)


def _run(args) -> int:
    """
    Run a sweep and write the CSV rows to the output path or stdout
    """
    rows, checks, path = isr.run_sweep(args.config, args.config_mapping, out=args.out, json_mirror=args.json)
    if path is None:
        if args.json:
            args.output.write(to_json(rows, checks))
        else:
            write_csv(rows, args.output)
    errors = sum(1 for row in rows if row["error"])
    if errors:
        logger.error(f"{errors} of {len(rows)} sweep points failed")
        return 1
    return 0


def _compare(args) -> int:
    """
    Write the comparison report as json
    """
    report = isr.run_compare(args.config, args.config_mapping)
    args.output.write(json.dumps(report, indent=4))
    failed = [s for s in report["scenarios"] if s["error"]]
    return 1 if failed else 0


def _presets(args) -> int:
    """
    Print the shipped figure configurations
    """
    for name, text in isr.api.presets().items():
        args.output.write(f"# {name}\n{text}\n")
    return 0


def _parser():
    parser = argparse.ArgumentParser(description="Implied Sharpe ratio expansion tool")
    parser.add_argument("--log-level", choices=["info", "debug"], default="info")
    parser.add_argument("--log-file", type=pathlib.Path, help="write log to given file instead of stdout")
    parser.add_argument("--log-console", action="store_true", help="write log to stdout")
    p_sub = parser.add_subparsers(help="sub-command help")

    # run
    p_run = p_sub.add_parser("run", help="Run the configured sweep")
    p_run.add_argument(
        "--output", type=argparse.FileType("w+"), help="stream for rows without an output path", default=sys.stdout
    )
    p_run.add_argument("--out", type=pathlib.Path, help="CSV output path. overrides the configured one")
    p_run.add_argument("--json", action="store_true", help="also write a JSON mirror of the rows")
    p_run.add_argument("--verbose", action="store_true", help="debug logging on the console")
    p_run.add_argument("--config-mapping", type=pathlib.Path, help="the config template mapping file path")
    p_run.add_argument("config", type=pathlib.Path, help="the sweep configuration file path")
    p_run.set_defaults(func=_run)

    # compare
    p_compare = p_sub.add_parser("compare", help="Compare the expansion against quadrature and oracles")
    p_compare.add_argument(
        "--output", type=argparse.FileType("w+"), help="output file path. defaults to stdout", default=sys.stdout
    )
    p_compare.add_argument("--config-mapping", type=pathlib.Path, help="the config template mapping file path")
    p_compare.add_argument("config", type=pathlib.Path, help="the configuration file path")
    p_compare.set_defaults(func=_compare)

    # presets
    p_presets = p_sub.add_parser("presets", help="Print the figure configurations")
    p_presets.add_argument(
        "--output", type=argparse.FileType("w+"), help="output file path. defaults to stdout", default=sys.stdout
    )
    p_presets.set_defaults(func=_presets)

    return parser


def main():
    parser = _parser()
    args = parser.parse_args()
    log_formatter = logging.Formatter("%(asctime)s:%(name)s:%(levelname)s:%(message)s")
    verbose = getattr(args, "verbose", False)
    # log level
    loglevel = logging.INFO
    if args.log_level == "debug" or verbose:
        loglevel = logging.DEBUG
    root_logger = logging.getLogger()
    root_logger.setLevel(loglevel)
    # log file
    if args.log_file:
        file_handler = logging.FileHandler(filename=args.log_file)
        file_handler.setFormatter(log_formatter)
        root_logger.addHandler(file_handler)
    # log console
    if args.log_console or verbose:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(log_formatter)
        root_logger.addHandler(console_handler)
    if "func" not in args:
        sys.exit(parser.print_help())
    ret = args.func(args)
    args.output.flush()
    sys.exit(ret)


if __name__ == "__main__":
    main()
