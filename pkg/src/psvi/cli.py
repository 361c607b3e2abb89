"""Command-line entry point: ``psvi <command> [--config PATH] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig
from .explain import ModelIntegrityError
from .ingest import SchemaError
from .pipeline import COMMANDS, InvariantError, MissingInputError, Run

EXIT_OK, EXIT_ERROR, EXIT_MISSING, EXIT_SCHEMA, EXIT_INVARIANT = 0, 1, 2, 3, 4

log = logging.getLogger("psvi")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psvi", description=(
        "Build a county power system vulnerability index from 15-minute outage records."))
    p.add_argument("command", choices=COMMANDS,
                   help="pipeline stage to run; 'all' chains every stage after synth")
    p.add_argument("--config", type=Path, help="JSON pipeline configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--threads", type=int, help="bound on worker threads (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    return p


def load_config(args) -> PipelineConfig:
    if args.config is not None:
        if not args.config.exists():
            raise MissingInputError(args.config)
        try:
            raw = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
    else:
        raw = {}
    if args.out is not None:
        raw["out"] = str(args.out)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    return PipelineConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        Run(cfg).run(args.command)
    except MissingInputError as exc:
        print(f"psvi: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (SchemaError, ConfigError) as exc:
        print(f"psvi: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (InvariantError, ModelIntegrityError) as exc:
        print(f"psvi: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception as exc:  # noqa: BLE001 - surface anything else as a generic failure
        log.debug("unhandled error", exc_info=True)
        print(f"psvi: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
