"""Search observers: violation augmentation, trace filtering, peer GC."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from .report import TraceEntry, Violation
from .vm import CLASS_NAMES, HEAP, Machine, reachable_objects

DEFAULT_LABEL = "[library internals]"


class ListenerError(RuntimeError):
    """A listener failed; the run is aborted rather than trusting its output."""


class Listener:
    """No-op base; subclasses override the hooks they need.

    Hooks observe. Only ``on_property_violated`` may return a replacement
    violation, and then only its trace and message may differ.
    """

    def on_state_advanced(self, state, transition) -> None:
        pass

    def on_backtrack(self, depth: int) -> None:
        pass

    def on_property_violated(self, violation: Violation) -> Violation | None:
        return None

    def on_object_unreachable(self, refs) -> None:
        pass


@dataclass(frozen=True)
class TraceFilterPolicy:
    hide_library: bool = False
    collapse: bool = True
    label: str = DEFAULT_LABEL


IDENTITY_POLICY = TraceFilterPolicy(hide_library=False, collapse=False)


def filter_trace(trace: Sequence[TraceEntry], policy: TraceFilterPolicy) -> tuple[TraceEntry, ...]:
    if not (policy.collapse or policy.hide_library):
        return tuple(trace)
    out: list[TraceEntry] = []
    in_run = False
    for e in trace:
        if not e.library:
            out.append(e)
            in_run = False
            continue
        if policy.collapse:
            if not in_run:
                out.append(TraceEntry(e.step, e.thread, policy.label, 0, False, True))
            in_run = True
    return tuple(out)


class TraceFilter(Listener):
    def __init__(self, policy: TraceFilterPolicy = TraceFilterPolicy()):
        self.policy = policy

    def on_property_violated(self, violation):
        return replace(violation, trace=filter_trace(violation.trace, self.policy))


def dispatch_violation(listeners: Iterable[Listener], v: Violation) -> Violation:
    for listener in listeners:
        try:
            out = listener.on_property_violated(v)
        except Exception as e:
            raise ListenerError(f"{type(listener).__name__} failed: {e}") from e
        if out is None:
            continue
        if out.kind != v.kind:
            raise ListenerError(f"{type(listener).__name__} changed the violation kind")
        v = out
    return v


def library_versions(state) -> set[tuple[str, int]]:
    """(class, version) of every library object reachable in `state`."""
    heap = state[HEAP]
    out = set()
    for i in reachable_objects(state):
        code, payload = heap[i]
        if code:
            out.add((CLASS_NAMES[code], payload))
    return out


def run_peer_gc(machine: Machine, refs, retained_states: Iterable) -> int:
    """Drop peer-side caches of `refs` not needed by any state we may resume.

    Liveness is every library version reachable from a state still on the
    search stack. Visited-set entries are only compared, never resumed, and
    the intern table itself is never shrunk, so their versions stay resolvable.
    """
    peers = machine.peers
    if not peers.gc_enabled:
        return 0
    live: set[tuple[str, int]] = set()
    for s in retained_states:
        live |= library_versions(s)
    return peers.notify_unreachable(refs, lambda cls, v: (cls, v) in live)


class PeerGc(Listener):
    """Collects peer caches of library objects no resumable state can reach.

    Checked when a new state drops an object and when backtracking pops the
    states that allocated or referenced one.
    """

    def __init__(self, machine: Machine, stack_states: Callable[[], list]):
        self.machine = machine
        self.stack_states = stack_states
        self.collected = 0

    def _candidates(self, state) -> list[int]:
        cached = [r for r, c in self.machine.peers.aux.items() if c]
        if not cached or state is None:
            return cached
        n = len(state[HEAP])
        live = reachable_objects(state)
        return [r for r in cached if r >= n or r not in live]

    def on_state_advanced(self, state, transition):
        if self.machine.peers.aux:
            refs = self._candidates(state)
            if refs:
                self.on_object_unreachable(refs)

    def on_backtrack(self, depth):
        if self.machine.peers.aux:
            states = self.stack_states()
            refs = self._candidates(states[-1] if states else None)
            if refs:
                self.on_object_unreachable(refs)

    def on_object_unreachable(self, refs):
        self.collected += run_peer_gc(self.machine, refs, self.stack_states())
