"""Command line entry point: ``overtrading <stage> --config pipeline.cfg``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .pipeline import STAGES, Run, StageError, run_pipeline, run_stage
from .synth import generate_synthetic

log = logging.getLogger("overtrading")


def _overrides(args) -> dict[str, str]:
    values = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    for key in ("seed", "out_dir", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = str(value)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overtrading", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--threads", type=int)

    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage from on-disk artifacts")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    synth = sub.add_parser("synth", parents=[common], help="write a synthetic input set")
    synth.add_argument("directory", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, synth_cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2

    if args.command == "synth":
        if args.seed is not None:
            synth_cfg.seed = args.seed
        try:
            data = generate_synthetic(args.directory, synth_cfg)
        except (ConfigError, OSError) as exc:
            print(f"error: synth: {exc}", file=sys.stderr)
            return 1
        print(data.config_path)
        return 0

    try:
        if args.command == "run":
            run_pipeline(cfg)
        else:
            try:
                cfg.validate(check_paths=args.command != "ingest")
            except ConfigError as exc:
                raise StageError("config", exc) from exc
            run_stage(Run(cfg), args.command)
    except StageError as exc:
        print(f"error: stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
