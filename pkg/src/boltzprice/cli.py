"""Command-line entry point: ``boltzprice run|preset|validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, SCALES, ConfigError, ExperimentConfig, load_config, parse_config, preset_document
from .runner import THREADS_ENV, run_experiment


def _summary(cfg: ExperimentConfig) -> str:
    g = cfg.grid
    runs = ", ".join(f"{r.label}:{r.model}" for r in cfg.runs)
    return (f"{cfg.name}: grid [{g.x_min:g}, {g.x_max:g}] with {g.n_cells} cells (h={g.h:g}); "
            f"runs {runs}; {len(cfg.comparisons)} comparison(s)")


def _execute(cfg: ExperimentConfig, out: str | None) -> int:
    directory = Path(out) if out else Path(cfg.directory)
    status, results = run_experiment(cfg, directory)
    for r in results:
        print(f"{r.label}: {'ok' if r.ok else 'FAILED'} ({len(r.rows)} records)")
    print(f"artifacts written to {directory}")
    if status:
        print(f"some runs failed; see {directory / 'error.txt'}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltzprice",
        description="Solvers for the Boltzmann-type price formation model and its limits.",
        epilog=f"{THREADS_ENV} caps how many runs execute in parallel (default 1).",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--out", help="override the output directory")

    p_pre = sub.add_parser("preset", help="execute a built-in experiment")
    p_pre.add_argument("name", choices=PRESETS)
    p_pre.add_argument("--out", help="output directory (default output/<name>-<scale>)")
    p_pre.add_argument("--scale", choices=SCALES, default="desk",
                       help="desk: reduced resolution; paper: the published parameters (slow)")
    p_pre.add_argument("--print-config", action="store_true", help="print the preset as JSON and exit")

    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config", help="path to a JSON experiment config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"valid: {_summary(cfg)}")
            return 0
        if args.command == "run":
            return _execute(load_config(args.config), args.out)
        doc = preset_document(args.name, args.scale)
        if args.print_config:
            print(json.dumps(doc, indent=2))
            return 0
        return _execute(parse_config(doc), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
