"""Depth-first exploration of thread interleavings with exact state matching."""

from __future__ import annotations

import marshal
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

from .asm import Program
from .listeners import Listener, PeerGc, TraceFilter, TraceFilterPolicy, dispatch_violation
from .peer import PeerRegistry
from .report import SearchReport, TraceEntry, Violation
from .vm import (
    GLOBALS,
    ILLEGAL,
    RUNNABLE,
    STATUS_NAMES,
    TERMINATED,
    THREADS,
    UNSUPPORTED,
    VIOLATION,
    Machine,
    canonical_serialize,
    enabled_threads,
    fmt_value,
    violation_kind,
)

MODES = ("abstracted", "reference")


class Transition(NamedTuple):
    thread: int
    executed: int
    function: str
    line: int
    library: bool
    end: str  # boundary | thread-ended | blocked | violation


@dataclass
class SearchConfig:
    mode: str = "abstracted"
    max_depth: int | None = None
    trace_filter: bool = False
    peer_gc: bool = False
    defines: dict[str, int] = field(default_factory=dict)
    # keep searching past violations, collecting every kind found
    stop_on_violation: bool = True
    # globals whose values are recorded in every terminal state
    observe: tuple[str, ...] = ()
    time_limit: float | None = None
    filter_policy: TraceFilterPolicy = TraceFilterPolicy()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


def _transition(machine: Machine, tid: int, r) -> Transition:
    name, line, lib = machine.location(r.function, r.pc)
    end = "boundary" if r.end == "continue" else r.end
    return Transition(tid, r.executed, name, line, lib, end)


def execute_transition(machine: Machine, state: tuple, tid: int) -> tuple[tuple, Transition]:
    r = machine.run(state, tid)
    return r.state, _transition(machine, tid, r)


def state_key(state: tuple) -> bytes:
    return canonical_serialize(state)


def detect_violation(state: tuple) -> Violation | None:
    kind = violation_kind(state)
    if kind == "assertion":
        return Violation("assertion", "assertion failed")
    if kind == "unsupported-native-method":
        return Violation(kind, f"no native implementation for {state[UNSUPPORTED]}")
    if kind == "illegal-monitor":
        return Violation(kind, state[ILLEGAL])
    threads = state[THREADS]
    if not enabled_threads(state) and any(t[0] != TERMINATED for t in threads):
        desc = ", ".join(
            f"{i}:{STATUS_NAMES[t[0]]}" + (f"({t[1]})" if t[0] in (1, 3) else "")
            for i, t in enumerate(threads)
            if t[0] != TERMINATED
        )
        return Violation("deadlock", f"no runnable thread [{desc}]")
    return None


def _entry(step: int, tr: Transition) -> TraceEntry:
    return TraceEntry(step, tr.thread, tr.function, tr.line, tr.library)


def explore(
    program: Program,
    config: SearchConfig | None = None,
    listeners: Sequence[Listener] = (),
    peers: PeerRegistry | None = None,
) -> SearchReport:
    config = config or SearchConfig()
    peers = peers if peers is not None else PeerRegistry(gc_enabled=config.peer_gc)
    machine = Machine(program, config.mode, peers)
    t0 = time.perf_counter()

    stack: list[list] = []  # [state, enabled tids, next child index]
    # (tid, RunResult) per tree edge on the current DFS path; resolved lazily
    path: list[tuple] = []

    hooks = list(listeners)
    gc = None
    if config.peer_gc:
        gc = PeerGc(machine, lambda: [n[0] for n in stack])
        hooks.append(gc)
    if config.trace_filter:
        hooks.append(TraceFilter(config.filter_policy))

    observe_idx = [machine.global_names.index(g) for g in config.observe]
    outcomes: set[tuple] = set()
    kinds: set[str] = set()
    first: Violation | None = None
    depth_hit: Violation | None = None

    init = machine.initial_state()
    key = state_key(init)
    visited = {key}
    peak = len(key)
    transitions = 0
    max_depth = 0
    stack.append([init, enabled_threads(init), 0])
    limit = config.max_depth
    deadline = None if config.time_limit is None else t0 + config.time_limit
    completed = True

    def violation_at(v: Violation, raw: list[tuple]) -> Violation:
        trail = [_transition(machine, t, r) for t, r in raw]
        v = replace(
            v,
            trace=tuple(_entry(i, tr) for i, tr in enumerate(trail)),
            schedule=tuple(tr.thread for tr in trail),
            states=len(visited),
            transitions=transitions,
        )
        return dispatch_violation(hooks, v) if hooks else v

    run = machine.run
    dumps = marshal.dumps  # canonical_serialize, bound once
    while stack:
        node = stack[-1]
        tids = node[1]
        if node[2] >= len(tids):
            stack.pop()
            if path:
                path.pop()
            if hooks:
                for h in hooks:
                    h.on_backtrack(len(stack))
            continue
        tid = tids[node[2]]
        node[2] += 1
        r = run(node[0], tid)
        transitions += 1
        if deadline is not None and not transitions & 1023 and time.perf_counter() > deadline:
            completed = False
            break
        child = r.state
        key = dumps(child, 2)
        if key in visited:
            continue
        visited.add(key)
        if len(key) > peak:
            peak = len(key)
        depth = len(stack)
        if depth > max_depth:
            max_depth = depth

        if r.end == VIOLATION:
            enabled = []
            v = detect_violation(child)
        else:
            enabled = [t for t, th in enumerate(child[0]) if th[0] == RUNNABLE]
            v = None if enabled else detect_violation(child)
        if v is not None:
            kinds.add(v.kind)
            if first is None:
                first = violation_at(v, path + [(tid, r)])
            if config.stop_on_violation:
                break
            continue
        if not enabled:
            if observe_idx:
                g = child[GLOBALS]
                outcomes.add(tuple(g[i] for i in observe_idx))
            continue
        if limit is not None and depth >= limit:
            kinds.add("depth-limit")
            if depth_hit is None:
                depth_hit = violation_at(
                    Violation("depth-limit", f"depth limit {limit} reached"), path + [(tid, r)]
                )
            continue
        stack.append([child, enabled, 0])
        path.append((tid, r))
        if hooks:
            tr = _transition(machine, tid, r)
            for h in hooks:
                h.on_state_advanced(child, tr)

    elapsed = (time.perf_counter() - t0) * 1000.0
    return SearchReport(
        states=len(visited),
        transitions=transitions,
        max_depth=max_depth,
        time_ms=elapsed,
        peak_state_bytes=peak,
        interned_versions=peers.interned_count,
        violation=first if first is not None else depth_hit,
        violation_kinds=frozenset(kinds),
        outcomes=frozenset(outcomes),
        completed=completed,
        gc_dropped=gc.collected if gc else 0,
    )


def replay(program: Program, schedule: Sequence[int], mode: str = "abstracted") -> tuple:
    """Re-execute a thread schedule from the initial state; returns the final state."""
    machine = Machine(program, mode)
    state = machine.initial_state()
    for tid in schedule:
        if tid not in enabled_threads(state):
            raise ValueError(f"thread {tid} is not enabled")
        state, _ = execute_transition(machine, state, tid)
    return state


def describe_globals(machine: Machine, state: tuple) -> dict[str, str]:
    return {n: fmt_value(v) for n, v in zip(machine.global_names, state[GLOBALS])}
