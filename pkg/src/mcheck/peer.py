"""Host-side peers for library objects.

The tracked state holds one version integer per library object. The payload
behind it lives here, interned per class so equal payloads share an id.
Tables are append-only for the lifetime of a search: a version written into
any state may resurface after backtracking, so ids are never recycled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Union

from . import conclib
from .conclib import IllegalMonitorState, WouldBlock


@dataclass(frozen=True)
class Return:
    value: Any
    version: int


@dataclass(frozen=True)
class Block:
    pass


@dataclass(frozen=True)
class ReturnAndWake:
    value: Any
    version: int
    wake: tuple[int, ...]


@dataclass(frozen=True)
class IllegalOp:
    message: str


@dataclass(frozen=True)
class Unsupported:
    method: str


NativeOutcome = Union[Return, Block, ReturnAndWake, IllegalOp, Unsupported]

BLOCKED = 1  # thread status code for "blocked on object", mirrored from vm


@dataclass(frozen=True)
class CallContext:
    tid: int
    cls: str
    method: str
    args: tuple
    obj: int
    version: int
    statuses: tuple = ()  # (code, arg) per thread id

    @property
    def waiters(self) -> tuple[int, ...]:
        return tuple(
            t for t, (code, arg) in enumerate(self.statuses) if code == BLOCKED and arg == self.obj
        )


@dataclass
class PeerClass:
    name: str
    methods: dict[str, Callable]
    initial: Any
    canonical: Callable[[Any], Any]


def default_classes() -> dict[str, PeerClass]:
    return {
        "lock": PeerClass("lock", conclib._lock_methods(), conclib.FREE_LOCK, conclib.canonical_lock),
        "atomicint": PeerClass(
            "atomicint", conclib._table(conclib.atomic_apply, "atomicint"), 0, conclib.canonical_int
        ),
        "map": PeerClass("map", conclib._table(conclib.map_apply, "map"), (), conclib.map_canonical),
    }


class PeerError(RuntimeError):
    """Interning contract breach; the search cannot continue."""


@dataclass
class InternTable:
    ids: dict = field(default_factory=dict)
    payloads: list = field(default_factory=list)

    def intern(self, payload) -> int:
        v = self.ids.get(payload)
        if v is None:
            v = len(self.payloads)
            self.ids[payload] = v
            self.payloads.append(payload)
        return v


class PeerRegistry:
    def __init__(self, classes: dict[str, PeerClass] | None = None, gc_enabled: bool = False):
        self.classes = classes if classes is not None else default_classes()
        self.tables = {name: InternTable() for name in self.classes}
        self.gc_enabled = gc_enabled
        # per-object memo of native results, keyed by heap index
        self.aux: dict[int, dict] = {}
        self.dropped = 0

    def intern_state(self, cls: str, payload) -> int:
        return self.tables[cls].intern(self.classes[cls].canonical(payload))

    def resolve(self, cls: str, version: int):
        payloads = self.tables[cls].payloads
        if not 0 <= version < len(payloads):
            raise PeerError(f"unknown {cls} version {version}")
        return payloads[version]

    def initial_version(self, cls: str) -> int:
        return self.intern_state(cls, self.classes[cls].initial)

    @property
    def interned_count(self) -> int:
        return sum(len(t.payloads) for t in self.tables.values())

    @property
    def aux_entries(self) -> int:
        return sum(len(c) for c in self.aux.values())

    def invoke_native(self, ctx: CallContext) -> NativeOutcome:
        waiters = ctx.waiters
        key = (ctx.cls, ctx.version, ctx.method, ctx.args, ctx.tid, waiters)
        cache = self.aux.setdefault(ctx.obj, {})
        hit = cache.get(key)
        if hit is not None:
            return hit
        out = self._invoke(ctx, waiters)
        cache[key] = out
        return out

    def _invoke(self, ctx: CallContext, waiters) -> NativeOutcome:
        pc = self.classes[ctx.cls]
        method = pc.methods.get(ctx.method)
        if method is None:
            return Unsupported(f"{ctx.cls}.{ctx.method}")
        payload = self.resolve(ctx.cls, ctx.version)
        try:
            res = method(payload, ctx.tid, ctx.args, waiters)
        except WouldBlock:
            return Block()
        except IllegalMonitorState as e:
            return IllegalOp(str(e))
        except (ValueError, TypeError) as e:
            return IllegalOp(f"{ctx.cls}.{ctx.method}: {e}")
        version = self.tables[ctx.cls].intern(res[1])
        if len(res) == 3 and res[2]:
            return ReturnAndWake(res[0], version, res[2])
        return Return(res[0], version)

    def notify_unreachable(self, refs, liveness: Callable[[str, int], bool]) -> int:
        """Drop memoized results of unreachable objects whose versions are dead.

        Interned payloads are never dropped: every one of them is named by some
        retained state, so the version bijection is untouched.
        """
        if not self.gc_enabled:
            return 0
        n = 0
        for r in refs:
            cache = self.aux.get(r)
            if not cache:
                continue
            dead = [k for k in cache if not liveness(k[0], k[1])]
            for k in dead:
                del cache[k]
            n += len(dead)
            if not cache:
                del self.aux[r]
        self.dropped += n
        return n
