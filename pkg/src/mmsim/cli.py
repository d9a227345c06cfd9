"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 partial results.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from importlib import resources

from . import __version__
from .antenna import ArrayConfig, Direction, GNB_ELEMENT, UE_ELEMENT, pattern_grid
from .campaign import (
    EXIT_OK, EXIT_PARTIAL, EXIT_RUNTIME, EXIT_VALIDATION, OUTPUT_ENV, output_dir, run_campaign,
)
from .config import Campaign, ConfigError, campaign_from_dict, config_schema, parse_config

log = logging.getLogger("mmsim")


def _steer(text: str) -> Direction:
    try:
        theta, phi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected THETA,PHI, got {text!r}") from None
    try:
        return Direction(theta, phi)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    # bad command lines are validation errors, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmsim", description="mmWave system-level simulation campaigns")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log every finished run")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a campaign")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default: config output_dir, then ${OUTPUT_ENV})")
    r.add_argument("--seeds", type=int, help="override the number of seeds per sweep point")
    r.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel runs")

    pt = sub.add_parser("pattern", help="export an array gain map as CSV")
    pt.add_argument("config")
    pt.add_argument("--array", choices=["gnb", "ue"], required=True)
    pt.add_argument("--steer", type=_steer, default=Direction(90.0, 0.0), metavar="THETA,PHI",
                    help="steering direction in the array frame, degrees (default 90,0)")
    pt.add_argument("--res", type=float, default=1.0, metavar="DEG")
    pt.add_argument("--out", help="CSV path (default stdout)")

    v = sub.add_parser("validate", help="check a config and print the planned run count")
    v.add_argument("config")

    s = sub.add_parser("schema", help="print a JSON schema")
    s.add_argument("which", choices=["config", "point-summary", "campaign-summary"])
    return p


def _load(path, seeds=None) -> Campaign:
    campaign = parse_config(path)
    if seeds is not None:
        data = campaign.to_dict()
        data["seeds"] = seeds
        campaign = campaign_from_dict(data)
    return campaign


def cmd_run(args) -> int:
    campaign = _load(args.config, args.seeds)
    out = output_dir(campaign, args.out)
    log.info("running %d runs into %s", campaign.n_runs, out)
    code = run_campaign(campaign, out, workers=args.workers)
    print(json.dumps({"output_dir": str(out), "exit": code}))
    return code


def cmd_pattern(args) -> int:
    campaign = parse_config(args.config)
    cfg = campaign.base
    if args.array == "gnb":
        arr = ArrayConfig(cfg.gnb_rows, cfg.gnb_cols, element=GNB_ELEMENT)
    else:
        arr = ArrayConfig(cfg.ue_rows, cfg.ue_cols, element=UE_ELEMENT)
    try:
        theta, phi, gain = pattern_grid(arr, args.steer, args.res)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_deg", "phi_deg", "gain_db"])
        for row in zip(theta, phi, gain):
            w.writerow([f"{x:.6f}" for x in row])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    campaign = parse_config(args.config)
    print(json.dumps({"valid": True, "points": len(campaign.points()), "runs": campaign.n_runs}))
    return EXIT_OK


def cmd_schema(args) -> int:
    if args.which == "config":
        schema = config_schema()
    else:
        name = args.which.replace("-", "_") + ".schema.json"
        schema = json.loads(resources.files("mmsim").joinpath("schemas", name).read_text())
    print(json.dumps(schema, indent=2))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "pattern": cmd_pattern, "validate": cmd_validate, "schema": cmd_schema}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_PARTIAL
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
