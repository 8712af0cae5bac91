"""``hilbert-clt`` command line entry point."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import parse_config
from .runner import (SUBCOMMANDS, plot_record, results_csv, run_experiment,
                     summary_text, write_outputs)

THREADS_ENV = "HILBERT_CLT_THREADS"


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hilbert-clt",
        description="Monte Carlo Berry-Esseen experiments for Hilbert-space valued processes.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON or TOML config file")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seeds", type=_seeds, help="comma-separated seeds (overrides seeds)")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads; the {THREADS_ENV} environment variable takes precedence")
    ap.add_argument("--format", choices=("csv", "json"), default="csv",
                    help="what to print on stdout; all result files are written regardless")
    return ap


def resolve_threads(arg: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return max(1, arg or 1)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seeds:
            cfg = cfg.with_overrides(seeds=args.seeds)
        out_dir = Path(args.out or cfg["output_dir"])
        sub = args.subcommand
        rec = run_experiment(cfg, sub, resolve_threads(args.threads))
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_outputs(cfg, rec, out_dir)
    if sub == "plot" or cfg["emit_plots"]:
        if rec.cells:
            plot_record(rec, out_dir)
    if args.format == "json":
        print(rec.to_json())
    else:
        sys.stdout.write(results_csv(rec) if rec.cells else "")
        sys.stdout.write(summary_text(cfg, rec))
    return 0 if rec.passed else 1


if __name__ == "__main__":
    sys.exit(main())
