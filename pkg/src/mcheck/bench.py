"""Benchmark suite: each template explored in both modes, ratios and trends."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .asm import Program, parse_file
from .explorer import SearchConfig, explore

PROGRAM_DIR = Path(__file__).parent / "programs"
BENCHMARKS = ("lock", "map", "atomicint")
CSV_COLUMNS = (
    "benchmark", "threads", "mode", "states", "transitions", "time_ms", "state_ratio", "time_ratio",
)
# relative slack when comparing median time ratios across thread counts
TIME_NOISE = 0.10


def benchmark_path(name: str) -> Path:
    if name not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    return PROGRAM_DIR / f"{name}.asm"


def benchmark_defines(name: str, threads: int) -> dict[str, int]:
    path = benchmark_path(name)
    defines = {"N": threads}
    # size the lock's waiter array to the thread ids actually in use
    if "LOCK_SLOTS" in parse_file(path).constants:
        defines["LOCK_SLOTS"] = threads + 1
    return defines


def load_benchmark(name: str, threads: int) -> Program:
    return parse_file(benchmark_path(name), benchmark_defines(name, threads))


@dataclass
class BenchRow:
    benchmark: str
    threads: int
    mode: str
    states: int = 0
    transitions: int = 0
    time_ms: float | None = None  # median over repeats
    times_ms: list[float] = field(default_factory=list)
    completed: bool = True
    violation: str | None = None
    state_ratio: float | None = None
    time_ratio: float | None = None


def run_row(name: str, threads: int, mode: str, repeat: int = 10,
            time_limit: float | None = None) -> BenchRow:
    program = load_benchmark(name, threads)
    row = BenchRow(name, threads, mode)
    counts = None
    for _ in range(repeat):
        report = explore(program, SearchConfig(mode=mode, time_limit=time_limit))
        if not report.completed:
            row.completed = False
            row.states, row.transitions = report.states, report.transitions
            row.times_ms.append(report.time_ms)
            break
        if counts is None:
            counts = report.counts()
        elif report.counts() != counts:
            raise RuntimeError(f"{name} N={threads} {mode}: counts differ between repeats")
        row.states, row.transitions = report.states, report.transitions
        row.violation = report.violation.kind if report.violation else None
        row.times_ms.append(report.time_ms)
    row.time_ms = statistics.median(row.times_ms) if row.times_ms else None
    return row


def _pair_ratios(ab: BenchRow, ref: BenchRow):
    if not (ab.completed and ref.completed) or not ab.states or not ab.time_ms:
        return
    sr = ref.states / ab.states
    tr = ref.time_ms / ab.time_ms
    for r in (ab, ref):
        r.state_ratio, r.time_ratio = sr, tr


@dataclass
class BenchResult:
    rows: list[BenchRow]
    repeat: int

    def row(self, name: str, threads: int, mode: str) -> BenchRow | None:
        for r in self.rows:
            if (r.benchmark, r.threads, r.mode) == (name, threads, mode):
                return r
        return None

    def ratios(self, name: str, kind: str = "state_ratio") -> dict[int, float]:
        return {
            r.threads: getattr(r, kind)
            for r in self.rows
            if r.benchmark == name and r.mode == "abstracted" and getattr(r, kind) is not None
        }

    def summary(self) -> dict:
        names = sorted({r.benchmark for r in self.rows}, key=BENCHMARKS.index)
        threads = sorted({r.threads for r in self.rows})
        pairs = [(n, t) for n in names for t in threads if self.row(n, t, "abstracted")]
        complete = all(self.row(n, t, "abstracted").state_ratio is not None for n, t in pairs)
        out: dict = {
            "complete": complete,
            "speedup_everywhere": complete and all(
                self.row(n, t, "abstracted").state_ratio >= 1 for n, t in pairs
            ),
        }
        if "lock" in names:
            sr = [v for _, v in sorted(self.ratios("lock").items())]
            tr = [v for _, v in sorted(self.ratios("lock", "time_ratio").items())]
            out["lock_state_ratio_nondecreasing"] = complete and all(
                b >= a for a, b in zip(sr, sr[1:])
            )
            out["lock_time_ratio_nondecreasing"] = complete and all(
                b >= a * (1 - TIME_NOISE) for a, b in zip(tr, tr[1:])
            )
        top = max(threads) if threads else None
        at_top = {n: self.ratios(n).get(top) for n in names}
        if set(BENCHMARKS) <= set(names):
            lk, mp, ai = (at_top[n] for n in BENCHMARKS)
            out["ordering_at_max_threads"] = None not in (lk, mp, ai) and lk > mp > ai >= 1
        out["max_threads"] = top
        out["state_ratio_at_max_threads"] = at_top
        return out


def run_suite(
    benchmarks: Sequence[str] = BENCHMARKS,
    threads: Sequence[int] = (2, 3, 4),
    repeat: int = 10,
    time_limit: float | None = None,
    progress: Callable[[BenchRow], None] | None = None,
) -> BenchResult:
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    for n in threads:
        if n < 2:
            raise ValueError("thread counts must be >= 2")
    rows = []
    for name in benchmarks:
        benchmark_path(name)
        for n in threads:
            pair = []
            for mode in ("abstracted", "reference"):
                row = run_row(name, n, mode, repeat, time_limit)
                pair.append(row)
                if progress:
                    progress(row)
            _pair_ratios(*pair)
            rows.extend(pair)
    return BenchResult(rows, repeat)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def render_csv(result: BenchResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows:
        states = r.states if r.completed else ""
        transitions = r.transitions if r.completed else ""
        w.writerow([r.benchmark, r.threads, r.mode, states, transitions, _fmt(r.time_ms if r.completed else None),
                    _fmt(r.state_ratio), _fmt(r.time_ratio)])
    return buf.getvalue()


def render_json(result: BenchResult) -> str:
    rows = []
    for r in result.rows:
        d = asdict(r)
        d["times_ms"] = [round(t, 3) for t in r.times_ms]
        rows.append(d)
    doc = {"repeat": result.repeat, "rows": rows, "summary": result.summary()}
    return json.dumps(doc, indent=2) + "\n"


def render_summary(result: BenchResult) -> str:
    s = result.summary()
    lines = []
    for key in ("complete", "speedup_everywhere", "lock_state_ratio_nondecreasing",
                "lock_time_ratio_nondecreasing", "ordering_at_max_threads"):
        if key in s:
            lines.append(f"{key}: {'yes' if s[key] else 'no'}")
    ratios = ", ".join(
        f"{n}={v:.2f}" if v is not None else f"{n}=n/a" for n, v in s["state_ratio_at_max_threads"].items()
    )
    lines.append(f"state ratios at N={s['max_threads']}: {ratios}")
    return "\n".join(lines) + "\n"
