"""Command-line front end.

Subcommands: generate, finalize, render, export, stats, validate. One JSON
config file drives everything; the only environment override is
DUOGRASP_WORKERS so reproducibility stays in the file. Structured JSON log
lines go to stderr, data to the configured paths.

Exit codes: 0 ok, 1 unexpected error, 2 config error, 3 validation/schema
error, 4 I/O error, 5 empty dataset.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, pipeline
from .errors import (ConfigError, DuograspError, EmptyDatasetError, EmptyMeshError,
                     SchemaVersionMismatchError, UnsupportedFormatError, ValidationError)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_EMPTY = 5

COMMANDS = ("generate", "finalize", "render", "export", "stats", "validate")


def log_event(quiet: bool = False, **fields) -> None:
    if not quiet:
        print(json.dumps(fields, sort_keys=True, default=str), file=sys.stderr)


def _parse_override(text: str):
    key, _, raw = text.partition("=")
    if not key or not raw:
        raise ConfigError(f"override {text!r} must look like key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duograsp",
        description="Dual-arm grasp pair dataset generation pipeline.")
    parser.add_argument("--version", action="version", version=f"duograsp {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("-c", "--config", required=True, help="JSON config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field (JSON value)")
    parser.add_argument("--workers", type=int, default=None,
                        help="override worker count (also DUOGRASP_WORKERS)")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress log lines")
    return parser


def load_config(args) -> pipeline.PipelineConfig:
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    for text in args.overrides:
        key, value = _parse_override(text)
        doc[key] = value
    env_workers = os.environ.get("DUOGRASP_WORKERS")
    if env_workers is not None:
        try:
            doc["workers"] = int(env_workers)
        except ValueError as err:
            raise ConfigError(f"DUOGRASP_WORKERS: {env_workers!r} is not an integer") from err
    if args.workers is not None:
        doc["workers"] = args.workers
    return pipeline.PipelineConfig.from_dict(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def log(**fields):
        log_event(quiet=args.quiet, **fields)

    try:
        cfg = load_config(args)
        log(event="start", command=args.command, config=args.config, seed=cfg.seed,
            workers=cfg.workers)
        if args.command == "generate":
            pipeline.run_generate(cfg, log)
        elif args.command == "finalize":
            pipeline.run_finalize(cfg, log)
        elif args.command == "render":
            pipeline.run_render(cfg, log)
        elif args.command == "export":
            pipeline.run_export(cfg, log)
        elif args.command == "stats":
            pipeline.run_stats(cfg, log)
        elif args.command == "validate":
            pipeline.run_validate(cfg, log)
        return EXIT_OK
    except ConfigError as err:
        log(event="error", kind="config", message=str(err))
        return EXIT_CONFIG
    except (ValidationError, SchemaVersionMismatchError) as err:
        log(event="error", kind="validation", message=str(err))
        return EXIT_VALIDATION
    except (FileNotFoundError, OSError, UnsupportedFormatError) as err:
        log(event="error", kind="io", message=str(err))
        return EXIT_IO
    except (EmptyDatasetError, EmptyMeshError) as err:
        log(event="error", kind="empty", message=str(err))
        return EXIT_EMPTY
    except DuograspError as err:
        log(event="error", kind="pipeline", message=str(err))
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
