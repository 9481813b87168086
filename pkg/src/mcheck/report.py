"""Search results and their text/json rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class TraceEntry:
    step: int
    thread: int
    function: str
    line: int
    library: bool
    synthetic: bool = False

    @property
    def location(self) -> str:
        if self.synthetic:
            return self.function
        return f"{self.function}:{self.line}"


@dataclass(frozen=True)
class Violation:
    kind: str  # assertion | deadlock | illegal-monitor | unsupported-native-method | depth-limit
    message: str
    trace: tuple[TraceEntry, ...] = ()
    # unfiltered thread choices from the initial state, for replay
    schedule: tuple[int, ...] = ()
    states: int = 0
    transitions: int = 0


@dataclass
class SearchReport:
    states: int
    transitions: int
    max_depth: int
    time_ms: float
    peak_state_bytes: int
    interned_versions: int
    violation: Violation | None = None
    violation_kinds: frozenset = frozenset()
    outcomes: frozenset = frozenset()
    completed: bool = True
    gc_dropped: int = 0
    extra: dict = field(default_factory=dict)

    def counts(self) -> tuple:
        """Fields that must not depend on timing or memory policy."""
        v = self.violation
        return (
            self.states,
            self.transitions,
            self.max_depth,
            self.interned_versions,
            None if v is None else (v.kind, v.message, v.trace, v.schedule),
            self.violation_kinds,
            self.outcomes,
            self.completed,
        )


def _trace_json(t: TraceEntry) -> dict:
    return {
        "step": t.step,
        "thread": t.thread,
        "function": t.function,
        "line": t.line,
        "library": t.library,
        "synthetic": t.synthetic,
    }


def report_dict(report: SearchReport) -> dict:
    v = report.violation
    return {
        "states": report.states,
        "transitions": report.transitions,
        "max_depth": report.max_depth,
        "time_ms": round(report.time_ms, 3),
        "peak_state_bytes": report.peak_state_bytes,
        "interned_versions": report.interned_versions,
        "violation": None
        if v is None
        else {"kind": v.kind, "message": v.message, "trace": [_trace_json(t) for t in v.trace]},
    }


def render_report(report: SearchReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report_dict(report), sort_keys=False) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    d = report_dict(report)
    lines = [f"{k}: {d[k]}" for k in ("states", "transitions", "max_depth", "time_ms",
                                       "peak_state_bytes", "interned_versions")]
    v = report.violation
    if v is None:
        lines.append("violation: none")
    else:
        lines.append(f"violation: {v.kind}")
        lines.append(f"message: {v.message}")
        lines.append(f"trace_length: {len(v.trace)}")
        for t in v.trace:
            tag = " [lib]" if t.library else ""
            lines.append(f"  #{t.step} thread {t.thread} at {t.location}{tag}")
    return "\n".join(lines) + "\n"
