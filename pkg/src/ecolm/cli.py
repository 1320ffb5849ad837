"""Command-line interface: ``ecolm run|sweep|report``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 report error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_run_config, parse_sweep_spec
from .errors import ConfigError, RecordError
from .runner import apply_cli_overrides, execute_run, execute_sweep, write_report

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_REPORT = 3


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--baseline", action="store_true",
                   help="also record the pre-segmentation baseline model")
    p.add_argument("--persist-shards", action="store_true",
                   help="write generated shards as token-id block files")
    p.add_argument("--persist-models", action="store_true",
                   help="write per-iteration model snapshots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecolm",
        description="Simulate collections of language models re-trained on "
        "their own output and measure how diversity shapes collapse.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one ecosystem run")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--seed", type=int, default=None, help="override run seed")
    _add_common_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run a diversity sweep")
    p_sweep.add_argument("spec", type=Path)
    p_sweep.add_argument("--workers", type=int, default=1,
                         help="concurrent runs (default 1)")
    _add_common_flags(p_sweep)

    p_report = sub.add_parser("report", help="summarize a run or sweep directory")
    p_report.add_argument("directory", type=Path)
    return parser


def _default_out(source: Path, suffix: str) -> Path:
    return Path.cwd() / f"{source.stem}_{suffix}"


def cmd_run(args) -> int:
    try:
        cfg = apply_cli_overrides(parse_run_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or _default_out(args.config, "run")
    try:
        result = execute_run(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"run complete: {out}")
    print(f"mu_T = {result.aggregated_ppl:.4f} over {len(result.records)} iterations")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        spec = parse_sweep_spec(args.spec)
        spec = type(spec)(
            base=apply_cli_overrides(spec.base, args),
            m_list=spec.m_list,
            seeds=spec.seeds,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or _default_out(args.spec, "sweep")
    try:
        results = execute_sweep(spec, out, workers=args.workers)
    except Exception as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failures = [(d, e) for _, d, e in results if e is not None]
    for run_dir, err in failures:
        print(f"run {run_dir.name} failed: {err}", file=sys.stderr)
    print(f"sweep complete: {out} ({len(results) - len(failures)}/{len(results)} ok)")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_report(args) -> int:
    try:
        report_dir = write_report(args.directory)
    except RecordError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_REPORT
    print(f"report written: {report_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "sweep":
        return cmd_sweep(args)
    return cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
