"""Command-line entry point.

Subcommands mirror the pipeline stages:

    vqclab sample-runs --manifest data/manifest.json --out out
    vqclab analyze     --out out
    vqclab verify      --out out
    vqclab report      --out out

--desk-scale applies the reduced preset (200 configurations, 30 epochs,
5 folds, datasets capped at 6 features); explicit flags still win.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import DatasetError, ValidationError
from .orchestrator import (
    DESK_SCALE,
    ExperimentManifest,
    cmd_analyze,
    cmd_sample_runs,
    cmd_verify,
)
from .reporting import cmd_report


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--manifest",
        default="data/manifest.json",
        help="dataset manifest JSON (default: data/manifest.json)",
    )
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--configs", type=int, default=None, help="configurations per dataset")
    parser.add_argument("--epochs", type=int, default=None, help="training epochs per fold")
    parser.add_argument("--folds", type=int, default=None, help="cross-validation folds")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel training workers")
    parser.add_argument(
        "--desk-scale",
        action="store_true",
        help="reduced preset: 200 configs, 30 epochs, 5 folds, <= 6 features",
    )


def _manifest_from_args(args) -> ExperimentManifest:
    defaults = {"n_configs": 1000, "epochs": 100, "folds": 10, "max_features": None}
    if args.desk_scale:
        defaults = dict(DESK_SCALE)
    return ExperimentManifest(
        datasets_manifest=args.manifest,
        out_dir=args.out,
        n_configs=args.configs if args.configs is not None else defaults["n_configs"],
        epochs=args.epochs if args.epochs is not None else defaults["epochs"],
        folds=args.folds if args.folds is not None else defaults["folds"],
        master_seed=args.seed,
        jobs=args.jobs,
        max_features=defaults["max_features"],
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="vqclab",
        description="Quantum classifier campaigns with hyperparameter importance analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("sample-runs", "sample configurations and train the quantum models"),
        ("analyze", "gate surrogates, compute importance and verification"),
        ("verify", "re-run verification searches from saved surrogates"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    p_report = sub.add_parser("report", help="write summary.md and figures")
    p_report.add_argument("--out", default="out", help="output directory (default: out)")

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            cmd_report(args.out)
            return 0
        manifest = _manifest_from_args(args)
        if args.command == "sample-runs":
            cmd_sample_runs(manifest)
        elif args.command == "analyze":
            cmd_analyze(manifest)
        elif args.command == "verify":
            cmd_verify(manifest)
    except (DatasetError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
