"""Command-line entry point: ``carnotflow <command> --config FILE --out DIR``.

Exit status is 0 when every configured assertion passes, 2 when one fails
and 1 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load
from .harness import COMMANDS, OutputLocked

EXIT_OK, EXIT_USAGE, EXIT_ASSERT = 0, 1, 2


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carnotflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "pde": "evolve the level-set equation and extract zero-set radii",
        "simulate": "simulate horizontal or controlled diffusions",
        "value": "Monte Carlo value functions at configured points",
        "compare": "grid solution against the control estimates",
        "sweep": "convergence table along one parameter axis",
        "check": "run the property suites",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=_u64, default=None, help="override the configured seed")
        p.add_argument("--threads", type=_positive, default=1, help="worker threads (results do not depend on it)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        result = COMMANDS[args.command](cfg, args.out, args.threads)
    except (ConfigError, OutputLocked, ValueError) as exc:
        # solver-side ValueErrors are parameter problems the config let through
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for line in result.notes + result.failures:
        print(line)
    print(f"{args.command}: {'ok' if result.ok else 'FAILED'} ({len(result.files)} file(s) in {result.out})")
    return EXIT_OK if result.ok else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
