"""``mcheck`` command line: verify one program, or run the benchmark suite."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .asm import ParseError, parse_file
from .bench import BENCHMARKS, render_csv, render_json, render_summary, run_suite
from .explorer import SearchConfig, explore
from .listeners import ListenerError
from .report import render_report
from .vm import ResourceLimit

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _define(text: str) -> tuple[str, int]:
    name, sep, value = text.partition("=")
    try:
        if not sep or not name:
            raise ValueError
        return name, int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=INT, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcheck", description="Explicit-state checker for stack-machine programs.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="explore one program exhaustively")
    r.add_argument("file")
    r.add_argument("--mode", choices=("abstracted", "reference"), default="abstracted")
    r.add_argument("--define", action="append", type=_define, default=[], metavar="NAME=V")
    r.add_argument("--max-depth", type=int, default=None)
    r.add_argument("--trace-filter", type=_on_off, default=True, metavar="on|off")
    r.add_argument("--peer-gc", type=_on_off, default=False, metavar="on|off")
    r.add_argument("--output", choices=("text", "json"), default="text")

    b = sub.add_parser("bench", help="run the benchmark suite in both modes")
    b.add_argument("--benchmarks", default=",".join(BENCHMARKS))
    b.add_argument("--threads", type=_int_list, default=[2, 3, 4])
    b.add_argument("--repeat", type=int, default=10)
    b.add_argument("--output", choices=("csv", "json"), default="csv")
    b.add_argument("--timeout", type=float, default=None,
                   help="seconds per exploration; slower rows are marked incomplete")
    b.add_argument("--out-dir", type=Path, default=None,
                   help="also write the table, summary and figures into this directory")
    return p


def cmd_run(args) -> int:
    try:
        program = parse_file(args.file, dict(args.define))
        config = SearchConfig(
            mode=args.mode,
            max_depth=args.max_depth,
            trace_filter=args.trace_filter,
            peer_gc=args.peer_gc,
            defines=dict(args.define),
        )
    except (OSError, ParseError, ValueError) as e:
        print(f"mcheck: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = explore(program, config)
    except (ResourceLimit, ListenerError, MemoryError, RecursionError) as e:
        print(f"mcheck: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    sys.stdout.write(render_report(report, args.output))
    if not report.completed:
        return EXIT_INTERNAL
    return EXIT_VIOLATION if report.violation is not None else EXIT_OK


def cmd_bench(args) -> int:
    names = [n for n in args.benchmarks.split(",") if n]
    bad = [n for n in names if n not in BENCHMARKS]
    if bad or not names:
        print(f"mcheck: unknown benchmark(s) {', '.join(bad) or '(none)'}", file=sys.stderr)
        return EXIT_USAGE
    if args.repeat < 1 or not args.threads or min(args.threads) < 2:
        print("mcheck: need --repeat >= 1 and thread counts >= 2", file=sys.stderr)
        return EXIT_USAGE

    def progress(row):
        state = "" if row.completed else " (incomplete)"
        print(f"{row.benchmark} N={row.threads} {row.mode}: {row.states} states, "
              f"{row.time_ms:.1f} ms{state}", file=sys.stderr, flush=True)

    result = run_suite(names, args.threads, args.repeat, args.timeout, progress)
    table = render_csv(result) if args.output == "csv" else render_json(result)
    sys.stdout.write(table)
    summary = render_summary(result)
    sys.stderr.write(summary)
    if args.out_dir is not None:
        from .plot import plot_ratios, plot_states

        out = args.out_dir
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(render_csv(result), encoding="utf-8")
        (out / "bench.json").write_text(render_json(result), encoding="utf-8")
        (out / "summary.txt").write_text(summary, encoding="utf-8")
        plot_ratios(result, out / "ratios.png")
        plot_states(result, out / "states.png")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_bench(args)
    except Exception as e:  # last resort: report, do not dump a traceback
        print(f"mcheck: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
