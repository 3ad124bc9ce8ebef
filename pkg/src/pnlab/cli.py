"""Command-line entry point: pnlab <scenario> --config <file> [--out <dir>] [--sweep p=v1,v2]."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .lab import COMMANDS, ScenarioConfig, run_scenario, sweep, validate
from .serial import ConfigError, load_config, parse_value


def _sweep_arg(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected <param>=<v1,v2,...>")
    name, raw = text.split("=", 1)
    values = [parse_value(v) for v in raw.split(",") if v.strip()]
    return name.strip(), values


def build_parser():
    ap = argparse.ArgumentParser(prog="pnlab", description="Fractional Peierls-Nabarro numerical lab")
    ap.add_argument("command", choices=COMMANDS, help="scenario or subcommand")
    ap.add_argument("--config", type=Path, help="flat key = value configuration file")
    ap.add_argument("--out", type=Path, default=None, help="output directory")
    ap.add_argument("--sweep", type=_sweep_arg, default=None, metavar="PARAM=V1,V2,...",
                    help="run the scenario once per value and aggregate sweep.csv")
    ap.add_argument("--s", type=float, default=None, help="fractional order (layer, corrector)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = args.out or Path(f"pnlab_{args.command}")
    try:
        params = load_config(args.config) if args.config else {}
        if args.s is not None:
            params["s"] = args.s
        if args.sweep is not None:
            if args.command == "sweep":
                raise ConfigError("--sweep needs a base scenario, not sweep")
            name, values = args.sweep
            manifest = sweep(args.command, validate(args.command, params), name, values, out)
        else:
            manifest = run_scenario(ScenarioConfig(args.command, params, out))
    except ConfigError as exc:
        print(json.dumps({"status": "error", "type": "ConfigError", "message": str(exc)}),
              file=sys.stderr)
        return 2
    summary = {"status": manifest.status, "out": str(out), "checks": manifest.checks}
    if manifest.error:
        summary["error"] = manifest.error["message"]
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
