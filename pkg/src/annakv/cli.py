"""Command line entry point: ``annakv bench`` and ``annakv validate-config``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench.scenarios import MODES, SCENARIOS, load_scenario_config, run_scenario, validate_config
from .policy import ConfigError


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="annakv", description="Elastic tiered key-value store experiments")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a named scenario and write timeline.csv and summary.txt")
    b.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    b.add_argument("--config", type=Path, help="name=value settings layered over the scenario defaults")
    b.add_argument("--out", type=Path, required=True, help="output directory")
    b.add_argument("--seed", type=_seed, default=0)
    b.add_argument("--mode", choices=MODES, default="capacity")

    v = sub.add_parser("validate-config", help="check a config file and print the resolved settings")
    v.add_argument("file", type=Path)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate-config":
            s = validate_config(load_scenario_config(args.file))
            print(f"ok: {args.file}")
            print(f"slo: {s.slo}")
            print(f"knobs: {s.knobs}")
            return 0
        config = load_scenario_config(args.config) if args.config else {}
        result = run_scenario(args.scenario, config, seed=args.seed, mode=args.mode)
        out = result.write(args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'timeline.csv'} ({len(result.rows)} rows)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
