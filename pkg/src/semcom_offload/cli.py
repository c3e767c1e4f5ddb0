"""Command-line interface."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, List, Tuple

from semcom_offload import __version__
from semcom_offload.benchmarks import SCHEME_NAMES
from semcom_offload.config import ConfigError, parse_config
from semcom_offload.pipeline import EXIT_ERROR, EXIT_USAGE, run_experiment, run_oracle_check, run_sweep_experiment

logger = logging.getLogger(__name__)

COMMANDS = ("run", "sweep", "compare", "oracle-check")


def setup_logging(verbose: bool) -> None:
    """Configure logging."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )


def _parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_sweep(spec: str) -> Tuple[str, List[Any]]:
    """Split KEY=v1,v2,... into the key and its parsed values.

    Raises:
        ValueError: If the key or the value list is empty
    """
    key, sep, raw_values = spec.partition("=")
    key = key.strip()
    values = [_parse_value(item) for item in raw_values.split(",") if item.strip()]
    if not sep or not key or not values:
        raise ValueError(f"--sweep expects KEY=v1,v2,..., got {spec!r}")
    return key, values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semcom-offload",
        description="Simulate prompt-generation offloading and resource allocation for semantic communication",
    )

    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument(
        "--config",
        help="Scenario file of flat dotted keys (default: built-in scenario)",
    )
    parser.add_argument("--seed", type=int, help="Master seed (unsigned 64-bit)")
    parser.add_argument("--trials", type=int, help="Monte-Carlo trials per run or sweep point")
    parser.add_argument(
        "--scheme",
        choices=SCHEME_NAMES + ("all",),
        help="Scheme for run/sweep (default: all)",
    )
    parser.add_argument("--sweep", metavar="KEY=v1,v2,...", help="Key and values for the sweep command")
    parser.add_argument("--out", default="results", help="Output directory (default: results)")
    parser.add_argument(
        "--cache-dir",
        help="Trial cache directory (default: <out>/cache)",
    )
    parser.add_argument(
        "--no-cache",
        action="store_true",
        help="Ignore cached trials and recompute everything",
    )
    parser.add_argument(
        "--instances",
        type=int,
        default=20,
        help="Random instances per oracle check (default: 20)",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Show detailed debug output",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _usage_error(message: str) -> int:
    print(f"Error: {message}", file=sys.stderr)
    return EXIT_USAGE


def run_command(args: argparse.Namespace) -> int:
    """Validate flag combinations, load the scenario and dispatch the command.

    Returns:
        Exit code
    """
    if args.command == "sweep" and not args.sweep:
        return _usage_error("sweep requires --sweep KEY=v1,v2,...")
    if args.command != "sweep" and args.sweep:
        return _usage_error(f"--sweep cannot be used with {args.command}")
    if args.command in ("compare", "oracle-check") and args.scheme:
        return _usage_error(f"--scheme cannot be used with {args.command}")
    if args.no_cache and args.cache_dir:
        return _usage_error("--no-cache and --cache-dir are mutually exclusive")
    if args.instances < 1:
        return _usage_error("--instances must be >= 1")

    sweep_key, sweep_values = "", []
    if args.sweep:
        try:
            sweep_key, sweep_values = parse_sweep(args.sweep)
        except ValueError as e:
            return _usage_error(str(e))

    # Load config and apply flag overrides
    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config = config.with_value("experiment.seed", args.seed)
        if args.trials is not None:
            config = config.with_value("experiment.trials", args.trials)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code

    schemes = SCHEME_NAMES if args.scheme in (None, "all") else (args.scheme,)
    cache_dir = None if args.no_cache else (args.cache_dir or str(Path(args.out) / "cache"))

    try:
        if args.command == "run":
            return run_experiment(config, args.out, schemes, cache_dir)
        if args.command == "compare":
            return run_experiment(config, args.out, SCHEME_NAMES, cache_dir, compare=True)
        if args.command == "sweep":
            return run_sweep_experiment(config, sweep_key, sweep_values, args.out, schemes, cache_dir)
        return run_oracle_check(config, args.out, args.instances)
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return EXIT_ERROR


def main() -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args()

    setup_logging(args.verbose)

    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
