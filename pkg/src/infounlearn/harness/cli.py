"""Command-line entry point: ``infounlearn <command> [--config F] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from ..barycenter import ConvergenceError
from ..densities import DataFormatError, SupportMismatchError
from .config import SCHEMAS, ConfigError, load_config
from .experiments import RUNNERS, AuditFailure, NonConvergence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_AUDIT = 4
EXIT_CONVERGENCE = 5

log = logging.getLogger("infounlearn")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infounlearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCHEMAS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("UNLEARN_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, {"seed": args.seed})
        report = RUNNERS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, SupportMismatchError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AuditFailure as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (NonConvergence, ConvergenceError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    log.info("%s finished in %.2fs", args.command, report.wall_time)
    for key, value in sorted(report.metrics.items()):
        if key != "features":
            print(f"{key}: {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
