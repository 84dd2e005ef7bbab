"""Command-line entry point: ``kwcsma {analytic,sweep,compare,dynamic}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .experiments import (
    PROTOCOLS,
    ConfigError,
    cmd_analytic,
    cmd_compare,
    cmd_dynamic,
    cmd_sweep,
    load_config,
)

EXIT_CONFIG_ERROR = 2


def _seed_list(text: str):
    try:
        seeds = tuple(int(s) for s in text.replace(" ", "").split(",") if s)
    except ValueError:
        raise ConfigError("--seeds", f"expected comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("--seeds", "must not be empty")
    if min(seeds) < 0:
        raise ConfigError("--seeds", "seeds must be non-negative")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kwcsma", description="Run throughput-optimal CSMA experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analytic": "throughput curves, optimal p, RandomReset attempt grids, DCF fixed points",
        "sweep": "simulated throughput over a p or p0 grid with a unimodality verdict",
        "compare": "protocol comparison over N values and seeds",
        "dynamic": "windowed throughput and control traces across an N schedule",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="YAML or JSON config (defaults apply to missing keys)")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--seeds", help="comma-separated seeds, overriding the config")
        p.add_argument("--duration", type=float, help="simulated seconds, overriding the config")
        if name == "dynamic":
            p.add_argument("--protocol", choices=PROTOCOLS, help="protocol, overriding the config")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seeds is not None:
            cfg = replace(cfg, seeds=_seed_list(args.seeds))
        if args.duration is not None:
            if not args.duration > 0:
                raise ConfigError("--duration", "must be positive")
            cfg = replace(cfg, duration_s=args.duration)
            if not cfg.static and cfg.schedule[-1][0] >= cfg.duration_s:
                raise ConfigError("schedule", "all changes must happen before the end of the run")
        if args.command == "analytic":
            result = cmd_analytic(cfg, args.out)
        elif args.command == "sweep":
            result = cmd_sweep(cfg, args.out)
        elif args.command == "compare":
            result = cmd_compare(cfg, args.out)
        else:
            result = cmd_dynamic(cfg, args.out, args.protocol)
    except ConfigError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    for name in result["outputs"]:
        print(f"{args.out}/{name}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
