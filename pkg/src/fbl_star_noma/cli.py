"""Command-line entry point.

Subcommands map onto experiment kinds::

    fbl-star-noma tradeoff-grid   --config exp.yaml --out results/
    fbl-star-noma optimize        --config exp.yaml --seed 7 --realizations 5
    fbl-star-noma compare         --config exp.yaml --format json
    fbl-star-noma validate-config --config exp.yaml
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, default_config, load_config, serialize
from .runner import EXIT_CONFIG, EXIT_IO, run_experiment

log = logging.getLogger("fbl_star_noma")

KIND_OF = {"tradeoff-grid": "tradeoff-grid", "optimize": "optimize-sweep", "compare": "convergence-compare"}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbl-star-noma", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more log output")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("tradeoff-grid", "sweep (m, a_c) at a fixed, non-optimized surface"),
        ("optimize", "run the alternating optimizer on every sweep cell"),
        ("compare", "run the optimizer and the block coordinate baseline side by side"),
        ("validate-config", "parse a config file, print the resolved values and exit"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML experiment file; omitted fields take defaults")
        if name != "validate-config":
            p.add_argument("--seed", type=_u64, help="base seed (overrides sweep.seed)")
            p.add_argument("--out", help="output directory (overrides output.dir)")
            p.add_argument("--format", choices=("csv", "json"), help="results table format")
            p.add_argument("--realizations", type=_positive, help="channel draws per cell")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.command == "validate-config":
            sys.stdout.write(serialize(cfg))
            print(f"# config_hash: {cfg.config_hash()}")
            return 0
        cfg = cfg.with_overrides(
            kind=KIND_OF[args.command],
            seed=args.seed,
            realizations=args.realizations,
            dir=args.out,
            format=args.format,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    return run_experiment(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
