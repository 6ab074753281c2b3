"""Command-line interface.

Subcommands map one-to-one onto experiment families; every run loads a
config file, applies the common overrides, executes, writes the report
artifacts and exits with:

    0  all verdicts passed,
    1  at least one verdict failed,
    2  configuration error,
    3  numerical precondition failure (kernel width, CFL, cost guard).
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, PreconditionError
from .config import kinds_for_command, parse_config_file
from .experiments import run
from .report import emit_report

_COMMANDS = {
    "sweep": "run an e2 or double-commutator width sweep",
    "check-identities": "verify the eight-term decomposition identity",
    "limits": "measure distances to the closed-form width limits",
    "theorem3": "sweep the entropy-weighted error combination",
    "moments": "check kernel moment identities",
    "simulate": "advance one noise path and dump the trajectory",
    "apriori": "Monte Carlo estimate of the space-time L^p mass",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mollab",
        description="torus laboratory for mollification commutators of transport noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--N", type=int, default=None, help="override nodes per axis")
        p.add_argument("--delta-min-k", type=int, default=None, dest="delta_min_k")
        p.add_argument("--delta-max-k", type=int, default=None, dest="delta_max_k")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument(
            "--formats",
            default="csv,json,svg",
            help="comma-separated report formats (csv,json,svg)",
        )
    return parser


def _apply_overrides(cfg, args):
    if args.N is not None:
        cfg.N = args.N
    if args.delta_min_k is not None:
        cfg.delta_min_k = args.delta_min_k
    if args.delta_max_k is not None:
        cfg.delta_max_k = args.delta_max_k
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    # re-validate after overrides
    from .config import _validate

    _validate(cfg)
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config_file(args.config)
        allowed = kinds_for_command(args.command)
        if cfg.experiment not in allowed:
            raise ConfigError(
                f"subcommand {args.command!r} expects experiment in "
                f"{allowed}, config declares {cfg.experiment!r}"
            )
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        return 3
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    written = emit_report(report, cfg.out_dir, formats)
    for verdict, outcome in sorted(report.verdicts.items()):
        print(f"{report.kind}: {verdict} = {outcome}")
    for fmt, path in written.items():
        print(f"wrote {fmt}: {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
