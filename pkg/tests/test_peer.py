from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcheck.conclib import FREE_LOCK, LockPayload
from mcheck.peer import (
    Block,
    CallContext,
    IllegalOp,
    PeerError,
    PeerRegistry,
    Return,
    ReturnAndWake,
    Unsupported,
)

from oracles import fuzz_interning

ints = st.integers(min_value=-(2**63), max_value=2**63 - 1)
small = st.integers(min_value=-5, max_value=5)


def ctx(peers, cls, method, payload, tid=0, args=(), statuses=()):
    return CallContext(tid, cls, method, args, 7, peers.intern_state(cls, payload), statuses)


def test_intern_idempotent_and_dense():
    peers = PeerRegistry()
    assert peers.intern_state("lock", FREE_LOCK) == 0
    assert peers.intern_state("lock", FREE_LOCK) == 0
    assert peers.intern_state("lock", LockPayload(1, 1)) == 1


def test_map_insertion_order_irrelevant():
    peers = PeerRegistry()
    a = peers.intern_state("map", {1: 10, 2: 20})
    b = peers.intern_state("map", {2: 20, 1: 10})
    assert a == b


def test_resolve_roundtrip_and_errors():
    peers = PeerRegistry()
    v = peers.intern_state("map", {3: 1})
    for i in range(20):
        peers.intern_state("map", {i: i})
    assert peers.resolve("map", v) == ((3, 1),)
    with pytest.raises(PeerError):
        peers.resolve("map", 999)


def test_invoke_examples():
    peers = PeerRegistry()
    out = peers.invoke_native(ctx(peers, "lock", "lock", FREE_LOCK, tid=1))
    assert out == Return(None, peers.intern_state("lock", LockPayload(1, 1)))
    out = peers.invoke_native(ctx(peers, "lock", "unlock", LockPayload(1, 1), tid=2))
    assert isinstance(out, IllegalOp)
    out = peers.invoke_native(ctx(peers, "atomicint", "incrementAndGet", 41))
    assert out == Return(42, peers.intern_state("atomicint", 42))


def test_block_and_wake():
    peers = PeerRegistry()
    held = LockPayload(0, 1)
    assert isinstance(peers.invoke_native(ctx(peers, "lock", "lock", held, tid=1)), Block)
    # thread 1 blocked on object 7, thread 2 blocked elsewhere
    statuses = ((0, 0), (1, 7), (1, 3))
    out = peers.invoke_native(ctx(peers, "lock", "unlock", held, tid=0, statuses=statuses))
    assert isinstance(out, ReturnAndWake) and out.wake == (1,)
    assert peers.resolve("lock", out.version) == FREE_LOCK


def test_unsupported_method():
    peers = PeerRegistry()
    assert peers.invoke_native(ctx(peers, "lock", "foo", FREE_LOCK)) == Unsupported("lock.foo")


def test_invoke_pure():
    a, b = PeerRegistry(), PeerRegistry()
    for peers in (a, b):
        peers.intern_state("map", {})
    c = ctx(a, "map", "put", {}, args=(1, 10))
    assert a.invoke_native(c) == a.invoke_native(c) == b.invoke_native(c)


def test_gc_disabled_is_noop():
    peers = PeerRegistry(gc_enabled=False)
    peers.invoke_native(ctx(peers, "atomicint", "get", 1))
    before = peers.aux_entries
    assert peers.notify_unreachable([7], lambda cls, v: False) == 0
    assert peers.aux_entries == before > 0


def test_gc_keeps_live_versions():
    peers = PeerRegistry(gc_enabled=True)
    peers.invoke_native(ctx(peers, "atomicint", "get", 1))
    peers.invoke_native(ctx(peers, "atomicint", "get", 2))
    live = peers.intern_state("atomicint", 2)
    n = peers.notify_unreachable([7], lambda cls, v: v == live)
    assert n == 1 and peers.aux_entries == 1
    # the interned tables are untouched
    assert peers.resolve("atomicint", live) == 2


def test_fuzz_small():
    assert fuzz_interning(2000, seed=7) == 0


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(small, small), st.randoms(use_true_random=False))
def test_map_version_soundness(d, rng):
    peers = PeerRegistry()
    items = list(d.items())
    rng.shuffle(items)
    assert peers.intern_state("map", d) == peers.intern_state("map", items)


@settings(max_examples=200, deadline=None)
@given(st.lists(ints, max_size=20))
def test_atomic_interning_bijection(values):
    peers = PeerRegistry()
    ids = [peers.intern_state("atomicint", v) for v in values]
    assert all(peers.resolve("atomicint", i) == v for i, v in zip(ids, values))
    assert len(set(ids)) == len(set(values))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["lock", "unlock", "tryLock"]), max_size=12),
       st.lists(st.integers(0, 2), min_size=12, max_size=12))
def test_lock_table_append_only(methods, tids):
    peers = PeerRegistry()
    v = peers.initial_version("lock")
    size = len(peers.tables["lock"].payloads)
    snapshot = list(peers.tables["lock"].payloads)
    for m, t in zip(methods, tids):
        out = peers.invoke_native(CallContext(t, "lock", m, (), 0, v))
        if isinstance(out, (Return, ReturnAndWake)):
            v = out.version
        assert len(peers.tables["lock"].payloads) >= size
        size = len(peers.tables["lock"].payloads)
    assert peers.tables["lock"].payloads[: len(snapshot)] == snapshot
