"""Payload semantics of the three modeled utilities.

Every operation is a pure function of a canonical payload. A successful call
returns ``(value, new_payload)`` or, for a releasing unlock,
``(value, new_payload, wake)``; a contended acquire raises
:class:`WouldBlock` and a misuse raises :class:`IllegalMonitorState`.
The interpreted counterparts live in ``lib/reference/*.asm``.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

CLASSES = ("lock", "atomicint", "map")

# public method surface: name -> argument count (object ref excluded)
METHODS: dict[str, dict[str, int]] = {
    "lock": {"lock": 0, "unlock": 0, "tryLock": 0},
    "atomicint": {"get": 0, "set": 1, "compareAndSet": 2, "incrementAndGet": 0, "addAndGet": 1},
    "map": {"get": 1, "put": 2, "remove": 1, "putIfAbsent": 2, "size": 0},
}

_INT_MIN = -(1 << 63)
_MASK = (1 << 64) - 1


def wrap(x: int) -> int:
    """Two's-complement 64-bit wraparound."""
    if _INT_MIN <= x < -_INT_MIN:
        return x
    return ((x - _INT_MIN) & _MASK) + _INT_MIN


class WouldBlock(Exception):
    pass


class IllegalMonitorState(Exception):
    pass


class LockPayload(NamedTuple):
    owner: int | None = None
    count: int = 0
    queue: tuple[int, ...] = ()


FREE_LOCK = LockPayload()


def _check_int(v, what):
    if type(v) is not int:
        raise IllegalMonitorState(f"{what} must be an integer, got {v!r}")
    return v


# -- lock ------------------------------------------------------------------

def lock_acquire(p: LockPayload, tid: int):
    if p.owner is None:
        return None, LockPayload(tid, 1, p.queue)
    if p.owner == tid:
        return None, p._replace(count=p.count + 1)
    # blocked bookkeeping lives in the thread status, so the payload is untouched
    raise WouldBlock


def lock_try_acquire(p: LockPayload, tid: int):
    if p.owner is None:
        return 1, LockPayload(tid, 1, p.queue)
    if p.owner == tid:
        return 1, p._replace(count=p.count + 1)
    return 0, p


def lock_release(p: LockPayload, tid: int, waiters: tuple[int, ...] = ()):
    if p.owner != tid:
        raise IllegalMonitorState(f"thread {tid} does not own the lock (owner {p.owner})")
    if p.count > 1:
        return None, p._replace(count=p.count - 1)
    # wake every waiter; each retries its acquire
    wake = tuple(sorted(set(p.queue) | set(waiters)))
    return None, FREE_LOCK, wake


# -- atomic integer ----------------------------------------------------------

def atomic_apply(op: str, p: int, args: tuple = ()):
    if op == "get":
        return p, p
    if op == "set":
        v = wrap(_check_int(args[0], "value"))
        return None, v
    if op == "compareAndSet":
        expected, new = args
        if p == expected:
            return 1, wrap(_check_int(new, "value"))
        return 0, p
    if op == "incrementAndGet":
        v = wrap(p + 1)
        return v, v
    if op == "addAndGet":
        v = wrap(p + _check_int(args[0], "delta"))
        return v, v
    raise KeyError(op)


# -- map ---------------------------------------------------------------------

def map_canonical(items) -> tuple[tuple[int, int], ...]:
    """Key-sorted pair tuple; accepts a dict or an iterable of pairs."""
    if isinstance(items, dict):
        items = items.items()
    return tuple(sorted(items))


def map_apply(op: str, p: tuple, args: tuple = ()):
    d = dict(p)
    if op == "size":
        return len(d), p
    key = _check_int(args[0], "key")
    if op == "get":
        return d.get(key), p
    if op == "remove":
        if key not in d:
            return None, p
        old = d.pop(key)
        return old, map_canonical(d)
    value = _check_int(args[1], "value")
    if op == "put":
        old = d.get(key)
        d[key] = value
        return old, map_canonical(d)
    if op == "putIfAbsent":
        if key in d:
            return d[key], p
        d[key] = value
        return None, map_canonical(d)
    raise KeyError(op)


# -- native method tables -------------------------------------------------
# signature: (payload, tid, args, waiters) -> result tuple

def _lock_methods():
    return {
        "lock": lambda p, tid, args, waiters: lock_acquire(p, tid),
        "tryLock": lambda p, tid, args, waiters: lock_try_acquire(p, tid),
        "unlock": lambda p, tid, args, waiters: lock_release(p, tid, waiters),
    }


def _table(apply, cls):
    return {m: (lambda p, tid, args, waiters, m=m: apply(m, p, args)) for m in METHODS[cls]}


def canonical_lock(p) -> LockPayload:
    owner, count, queue = p
    if (owner is None) != (count == 0):
        raise ValueError(f"inconsistent lock payload {p!r}")
    return LockPayload(owner, count, tuple(queue))


def canonical_int(p) -> int:
    return wrap(int(p))


def reference_library_source(cls: str) -> str:
    if cls not in CLASSES:
        raise KeyError(cls)
    return (Path(__file__).parent / "lib" / "reference" / f"{cls}.asm").read_text(encoding="utf-8")
