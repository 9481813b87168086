"""Independent checkers used by the tests.

The enumerator here shares only the single-instruction ``step`` with the
explorer: it builds transitions itself from ``step`` and the boundary test,
walks breadth first, and matches states by tuple equality instead of by
serialized bytes.
"""

from __future__ import annotations

import random
from collections import deque
from pathlib import Path

from mcheck.asm import parse_file
from mcheck.conclib import LockPayload
from mcheck.explorer import SearchConfig, explore
from mcheck.peer import PeerRegistry
from mcheck.vm import Machine, RUNNABLE, StepOutcome

CORPUS = Path(__file__).parent / "corpus"


def corpus_files() -> list[Path]:
    return sorted(CORPUS.glob("*.asm"))


def observe_all(program) -> tuple[str, ...]:
    return tuple(program.global_names)


def exhaustive(path, mode: str, **kw):
    program = parse_file(path)
    cfg = SearchConfig(mode=mode, stop_on_violation=False, observe=observe_all(program), **kw)
    return explore(program, cfg)


def brute_force_transition(machine: Machine, state: tuple, tid: int) -> tuple:
    while True:
        state, out = machine.step(state, tid)
        if out.kind != "continue":
            return state


def brute_force_graph(path, mode: str = "abstracted") -> tuple[int, int]:
    """(distinct states, edges) of the full transition graph, no pruning tricks."""
    machine = Machine(parse_file(path), mode)
    init = machine.initial_state()
    seen = {init}
    todo = deque([init])
    edges = 0
    while todo:
        s = todo.popleft()
        if s[4] or s[5] is not None or s[6] is not None:
            continue  # violation states are leaves
        for tid, th in enumerate(s[0]):
            if th[0] != RUNNABLE:
                continue
            edges += 1
            c = brute_force_transition(machine, s, tid)
            if c not in seen:
                seen.add(c)
                todo.append(c)
    return len(seen), edges


def random_payload(rng: random.Random, cls: str):
    if cls == "atomicint":
        return rng.choice([rng.randint(-3, 3), rng.randint(-(2**63), 2**63 - 1)])
    if cls == "map":
        return {rng.randint(-4, 4): rng.randint(-2, 2) for _ in range(rng.randint(0, 5))}
    owner = rng.choice([None, 0, 1, 2])
    count = 0 if owner is None else rng.randint(1, 3)
    return LockPayload(owner, count, tuple(rng.sample(range(4), rng.randint(0, 2))))


def shuffled_copy(rng: random.Random, payload):
    if isinstance(payload, dict):
        items = list(payload.items())
        rng.shuffle(items)
        return dict(items) if rng.random() < 0.5 else items
    return payload


def fuzz_interning(iterations: int, seed: int = 1) -> int:
    """Return the number of failed checks over random payloads."""
    rng = random.Random(seed)
    peers = PeerRegistry()
    canon: dict = {}
    failures = 0
    for _ in range(iterations):
        cls = rng.choice(("lock", "atomicint", "map"))
        p = random_payload(rng, cls)
        v = peers.intern_state(cls, p)
        again = peers.intern_state(cls, shuffled_copy(rng, p))
        c = peers.classes[cls].canonical(p)
        prior = canon.setdefault((cls, c), v)
        if v != again or prior != v or peers.resolve(cls, v) != c:
            failures += 1
    # bijection: distinct canonical payloads have distinct ids
    for cls, table in peers.tables.items():
        if len(set(table.ids.values())) != len(table.payloads):
            failures += 1
    return failures


__all__ = ["CORPUS", "StepOutcome", "brute_force_graph", "corpus_files", "exhaustive", "fuzz_interning", "observe_all"]
