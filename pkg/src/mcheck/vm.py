"""Machine state and the single-thread interpreter.

A system state is a nested tuple of plain ints, ``None`` and tuples, which
keeps it hashable and lets ``marshal`` produce a canonical byte string::

    state  = (threads, globals, heap, next_tid, assert_failed, illegal, unsupported)
    thread = (status, status_arg, frames, permit, atomic_depth)
    frame  = (function_index, pc, locals, operand_stack)
    object = (class_code, payload)   # array: tuple of values; library: version int

Values are ints, ``None`` (nil) or a one-element tuple ``(heap_index,)``
standing for an object reference. Globals are ordered by name.
"""

from __future__ import annotations

import marshal
from typing import NamedTuple

from .asm import Program
from .blocks import Bail, compile_function
from .conclib import CLASSES, wrap
from .peer import (
    Block,
    CallContext,
    IllegalOp,
    PeerRegistry,
    Return,
    ReturnAndWake,
    Unsupported,
)

# state fields
THREADS, GLOBALS, HEAP, NEXT_TID, ASSERT_FAILED, ILLEGAL, UNSUPPORTED = range(7)

# thread status codes
RUNNABLE, BLOCKED, PARKED, WAITING_JOIN, TERMINATED = range(5)
STATUS_NAMES = ("runnable", "blocked", "parked", "waiting-join", "terminated")

# heap class codes
ARRAY = 0
CLASS_CODES = {name: i + 1 for i, name in enumerate(CLASSES)}
CLASS_NAMES = {v: k for k, v in CLASS_CODES.items()}

(
    PUSH, POP, DUP, LOAD, STORE, ADD, SUB, MUL, EQ, LT, NOT, JMP, JZ, CALL, RET, TID,
    GLOAD, GSTORE, GCAS, NEWARR, ALOAD, ASTORE, ACAS, NEW, INVOKE, SPAWN, JOIN, PARK,
    UNPARK, ATOMIC_BEGIN, ATOMIC_END, ASSERT, HALT,
) = range(33)

OPCODES = {
    "push": PUSH, "pop": POP, "dup": DUP, "load": LOAD, "store": STORE, "add": ADD,
    "sub": SUB, "mul": MUL, "eq": EQ, "lt": LT, "not": NOT, "jmp": JMP, "jz": JZ,
    "call": CALL, "ret": RET, "tid": TID, "gload": GLOAD, "gstore": GSTORE, "gcas": GCAS,
    "newarr": NEWARR, "aload": ALOAD, "astore": ASTORE, "acas": ACAS, "new": NEW,
    "invoke": INVOKE, "spawn": SPAWN, "join": JOIN, "park": PARK, "unpark": UNPARK,
    "atomic_begin": ATOMIC_BEGIN, "atomic_end": ATOMIC_END, "assert": ASSERT, "halt": HALT,
}

OPNAMES = {v: k for k, v in OPCODES.items()}

# scheduling points; `new` is not one because a fresh object is thread-local
BOUNDARY_OPS = frozenset(
    {GLOAD, GSTORE, GCAS, ALOAD, ASTORE, ACAS, PARK, UNPARK, SPAWN, JOIN, INVOKE}
)

# transition / step end reasons
CONTINUE = "continue"
BOUNDARY = "boundary"
THREAD_ENDED = "thread-ended"
BLOCKED_END = "blocked"
VIOLATION = "violation"

MAX_TRANSITION_INSTRUCTIONS = 1_000_000


class ResourceLimit(RuntimeError):
    pass


class _Fault(Exception):
    pass


class StepOutcome(NamedTuple):
    kind: str  # continue | boundary | thread-ended | blocked | violation
    violation: str | None = None


class RunResult(NamedTuple):
    state: tuple
    executed: int
    end: str
    function: int
    pc: int


def ref(index: int) -> tuple:
    return (index,)


def is_ref(v) -> bool:
    return type(v) is tuple


def fmt_value(v) -> str:
    if v is None:
        return "nil"
    if type(v) is tuple:
        return f"#{v[0]}"
    return str(v)


def canonical_serialize(state: tuple) -> bytes:
    # version 2 has no back-references, so equal values give equal bytes
    return marshal.dumps(state, 2)


class Machine:
    """Program + search mode + peer tables; the interpreter entry points."""

    def __init__(self, program: Program, mode: str = "abstracted", peers: PeerRegistry | None = None):
        if mode not in ("abstracted", "reference"):
            raise ValueError(f"unknown mode {mode!r}")
        self.program = program
        self.mode = mode
        self.reference = mode == "reference"
        self.peers = peers if peers is not None else PeerRegistry()
        self.global_names = program.global_names
        gindex = {n: i for i, n in enumerate(self.global_names)}
        self.functions = list(program.functions.values())
        findex = {f.name: i for i, f in enumerate(self.functions)}
        self.findex = findex
        self.code: list[list[tuple]] = []
        self.boundary: list[list[bool]] = []
        self.blocks: list[list] = []
        for f in self.functions:
            compiled = []
            for ins in f.code:
                op = OPCODES[ins.op]
                a = ins.args
                if op in (GLOAD, GSTORE, GCAS):
                    compiled.append((op, gindex[a[0]]))
                elif op in (CALL, SPAWN):
                    callee = program.functions[a[0]]
                    compiled.append((op, findex[a[0]], a[1], callee.nlocals))
                elif op == NEW:
                    target = findex.get(f"{a[0]}.new", -1)
                    nl = self.functions[target].nlocals if target >= 0 else 0
                    compiled.append((op, CLASS_CODES[a[0]], a[0], target, nl))
                elif op == INVOKE:
                    cls, meth, argc = a
                    target = findex.get(f"{cls}.{meth}", -1)
                    if target >= 0 and self.functions[target].nparams != argc + 1:
                        target = -1
                    nl = self.functions[target].nlocals if target >= 0 else 0
                    compiled.append((op, CLASS_CODES[cls], cls, meth, argc, target, nl))
                else:
                    compiled.append((op,) + tuple(a))
            self.code.append(compiled)
            self.boundary.append([c[0] in BOUNDARY_OPS for c in compiled])
            self.blocks.append(compile_function(compiled, OPNAMES))
        self.main = findex[program.entry]

    # -- state construction / queries --------------------------------------

    def initial_state(self) -> tuple:
        main = self.functions[self.main]
        frame = (self.main, 0, (0,) * main.nlocals, ())
        thread = (RUNNABLE, 0, (frame,), 0, 0)
        globals_ = tuple(self.program.globals[n] for n in self.global_names)
        return ((thread,), globals_, (), 1, 0, None, None)

    def global_value(self, state: tuple, name: str):
        return state[GLOBALS][self.global_names.index(name)]

    def location(self, fid: int, pc: int) -> tuple[str, int, bool]:
        f = self.functions[fid]
        return f.name, f.lines[pc], f.library

    def next_is_boundary(self, state: tuple, tid: int) -> bool:
        th = state[THREADS][tid]
        if th[4]:
            return False
        fid, pc = th[2][-1][0], th[2][-1][1]
        return self.boundary[fid][pc]

    # -- execution ----------------------------------------------------------

    def step(self, state: tuple, tid: int) -> tuple[tuple, StepOutcome]:
        r = self.run(state, tid, single=True)
        if r.end == VIOLATION:
            return r.state, StepOutcome(VIOLATION, violation_kind(r.state))
        if r.end == CONTINUE and self.next_is_boundary(r.state, tid):
            return r.state, StepOutcome(BOUNDARY)
        return r.state, StepOutcome(r.end)

    def run(self, state: tuple, tid: int, single: bool = False) -> RunResult:
        """Run thread `tid` from its pc.

        With ``single`` exactly one instruction executes. Otherwise the first
        instruction always executes and the run stops before the next
        scheduling point outside an atomic section.
        """
        threads = list(state[0])
        glob = state[1]
        glob_w = False
        heap = state[2]
        heap_w = False
        assert_failed, illegal, unsupported = state[4], state[5], state[6]

        status, sarg, frames, permit, depth = threads[tid]
        if status != RUNNABLE:
            raise ValueError(f"thread {tid} is not runnable")
        frames = list(frames)
        fid, pc, locs, stack = frames.pop()
        start_fid, start_pc = fid, pc
        locs = list(locs)
        stack = list(stack)
        code = self.code[fid]
        bnd = self.boundary[fid]
        blks = self.blocks[fid]
        count = 0
        end = CONTINUE
        limit = 1 if single else MAX_TRANSITION_INSTRUCTIONS
        push = stack.append
        pop = stack.pop

        try:
            while True:
                if count:
                    if bnd[pc] and not depth and not single:
                        end = BOUNDARY
                        break
                    if count >= limit:
                        if single:
                            break
                        raise ResourceLimit(
                            f"thread {tid} ran {count} instructions without reaching a scheduling point"
                        )
                if not single:
                    blk = blks[pc]
                    if blk is not None:
                        try:
                            pc, n = blk(locs, stack, tid)
                        except (Bail, IndexError):
                            pass  # replay one instruction at a time for the exact fault
                        else:
                            count += n
                            continue
                ins = code[pc]
                op = ins[0]
                count += 1
                # rough frequency order
                if op == LOAD:
                    push(locs[ins[1]])
                elif op == PUSH:
                    push(ins[1])
                elif op == STORE:
                    locs[ins[1]] = pop()
                elif op == JZ:
                    v = pop()
                    if type(v) is not int:
                        raise _Fault(f"jz condition must be an integer, got {fmt_value(v)}")
                    if v == 0:
                        pc = ins[1]
                        continue
                elif op == JMP:
                    pc = ins[1]
                    continue
                elif op <= LT and op >= ADD and op != EQ:
                    b = pop()
                    a = pop()
                    if type(a) is not int or type(b) is not int:
                        raise _Fault(f"operand must be an integer, got {fmt_value(b if type(a) is int else a)}")
                    if op == ADD:
                        push(wrap(a + b))
                    elif op == SUB:
                        push(wrap(a - b))
                    elif op == LT:
                        push(1 if a < b else 0)
                    else:
                        push(wrap(a * b))
                elif op == EQ:
                    b = pop()
                    push(1 if pop() == b else 0)
                elif op == ALOAD:
                    i = pop()
                    arr = self._array(heap, pop())
                    if type(i) is not int or not 0 <= i < len(arr):
                        raise _Fault(f"array index {fmt_value(i)} out of range [0, {len(arr)})")
                    push(arr[i])
                elif op == ASTORE or op == ACAS:
                    v = pop()
                    if op == ACAS:
                        expected = pop()
                    i = pop()
                    r = pop()
                    arr = self._array(heap, r)
                    if type(i) is not int or not 0 <= i < len(arr):
                        raise _Fault(f"array index {fmt_value(i)} out of range [0, {len(arr)})")
                    if op == ASTORE or arr[i] == expected:
                        if not heap_w:
                            heap = list(heap)
                            heap_w = True
                        heap[r[0]] = (ARRAY, arr[:i] + (v,) + arr[i + 1:])
                        if op == ACAS:
                            push(1)
                    else:
                        push(0)
                elif op == CALL or (self.reference and (op == INVOKE or op == NEW)):
                    if op == CALL:
                        target, argc, nlocals = ins[1], ins[2], ins[3]
                    elif op == NEW:
                        target, argc, nlocals = ins[3], 0, ins[4]
                    else:
                        target, argc, nlocals = ins[5], ins[4] + 1, ins[6]
                        if len(stack) < argc:
                            raise _Fault("operand stack underflow")
                    if target < 0:
                        unsupported = f"{ins[2]}.new" if op == NEW else f"{ins[2]}.{ins[3]}"
                        count -= 1
                        end = VIOLATION
                        break
                    if argc:
                        if len(stack) < argc:
                            raise _Fault("operand stack underflow")
                        args = stack[-argc:]
                        del stack[-argc:]
                    else:
                        args = []
                    frames.append((fid, pc + 1, tuple(locs), tuple(stack)))
                    fid, pc = target, 0
                    locs = args + [0] * (nlocals - argc) if nlocals > argc else args
                    stack = []
                    push = stack.append
                    pop = stack.pop
                    code = self.code[fid]
                    bnd = self.boundary[fid]
                    blks = self.blocks[fid]
                    continue
                elif op == RET:
                    v = stack[-1] if stack else None
                    if not frames:
                        status = TERMINATED
                        end = THREAD_ENDED
                        break
                    fid, pc, locs, stack = frames.pop()
                    locs = list(locs)
                    stack = list(stack)
                    stack.append(v)
                    push = stack.append
                    pop = stack.pop
                    code = self.code[fid]
                    bnd = self.boundary[fid]
                    blks = self.blocks[fid]
                    continue
                elif op == NOT:
                    v = pop()
                    if type(v) is not int:
                        raise _Fault(f"operand must be an integer, got {fmt_value(v)}")
                    push(1 if v == 0 else 0)
                elif op == POP:
                    pop()
                elif op == DUP:
                    push(stack[-1])
                elif op == TID:
                    push(tid)
                elif op == GLOAD:
                    push(glob[ins[1]])
                elif op == GSTORE:
                    v = pop()
                    if not glob_w:
                        glob = list(glob)
                        glob_w = True
                    glob[ins[1]] = v
                elif op == GCAS:
                    new = pop()
                    expected = pop()
                    if glob[ins[1]] == expected:
                        if not glob_w:
                            glob = list(glob)
                            glob_w = True
                        glob[ins[1]] = new
                        push(1)
                    else:
                        push(0)
                elif op == NEWARR:
                    if not heap_w:
                        heap = list(heap)
                        heap_w = True
                    heap.append((ARRAY, (0,) * ins[1]))
                    push((len(heap) - 1,))
                elif op == INVOKE:
                    _, ccode, cls, meth, argc = ins[:5]
                    if len(stack) < argc + 1:
                        raise _Fault("operand stack underflow")
                    r = stack[-argc - 1]
                    obj = self._library_object(heap, r, ccode, cls)
                    args = tuple(stack[-argc:]) if argc else ()
                    statuses = tuple((t[0], t[1]) for t in threads)
                    out = self.peers.invoke_native(
                        CallContext(tid, cls, meth, args, r[0], obj[1], statuses)
                    )
                    kind = type(out)
                    if kind is Return or kind is ReturnAndWake:
                        del stack[-argc - 1:]
                        push(out.value)
                        if out.version != obj[1]:
                            if not heap_w:
                                heap = list(heap)
                                heap_w = True
                            heap[r[0]] = (ccode, out.version)
                        if kind is ReturnAndWake:
                            for w in out.wake:
                                t = threads[w]
                                if t[0] == BLOCKED and t[1] == r[0]:
                                    threads[w] = (RUNNABLE, 0) + t[2:]
                    elif kind is Block:
                        count -= 1
                        status, sarg = BLOCKED, r[0]
                        end = BLOCKED_END
                        break
                    elif kind is IllegalOp:
                        raise _Fault(out.message)
                    else:
                        assert kind is Unsupported
                        count -= 1
                        unsupported = out.method
                        end = VIOLATION
                        break
                elif op == NEW:
                    if not heap_w:
                        heap = list(heap)
                        heap_w = True
                    heap.append((ins[1], self.peers.initial_version(ins[2])))
                    push((len(heap) - 1,))
                elif op == SPAWN:
                    target, argc, nlocals = ins[1], ins[2], ins[3]
                    if argc:
                        if len(stack) < argc:
                            raise _Fault("operand stack underflow")
                        args = stack[-argc:]
                        del stack[-argc:]
                    else:
                        args = []
                    new_tid = len(threads)
                    frame = (target, 0, tuple(args + [0] * (nlocals - argc)), ())
                    threads.append((RUNNABLE, 0, (frame,), 0, 0))
                    push(new_tid)
                elif op == JOIN:
                    t = stack[-1]
                    if type(t) is not int or not 0 <= t < len(threads) or t == tid:
                        raise _Fault(f"join on invalid thread {fmt_value(t)}")
                    if threads[t][0] != TERMINATED:
                        count -= 1
                        status, sarg = WAITING_JOIN, t
                        end = BLOCKED_END
                        break
                    pop()
                elif op == PARK:
                    pc += 1
                    if permit:
                        permit = 0
                        continue
                    status = PARKED
                    end = BLOCKED_END
                    break
                elif op == UNPARK:
                    t = pop()
                    if type(t) is not int:
                        raise _Fault(f"thread id must be an integer, got {fmt_value(t)}")
                    if t == tid:
                        permit = 1
                    elif 0 <= t < len(threads):
                        th = threads[t]
                        if th[0] == PARKED:
                            threads[t] = (RUNNABLE, 0, th[2], th[3], th[4])
                        elif th[0] != TERMINATED:
                            threads[t] = (th[0], th[1], th[2], 1, th[4])
                    # not-yet-spawned (or negative) ids: no-op
                elif op == ATOMIC_BEGIN:
                    depth += 1
                elif op == ATOMIC_END:
                    if not depth:
                        raise _Fault("atomic_end outside an atomic section")
                    depth -= 1
                elif op == ASSERT:
                    v = pop()
                    if type(v) is not int:
                        raise _Fault(f"assert operand must be an integer, got {fmt_value(v)}")
                    if v == 0:
                        assert_failed = 1
                        pc += 1
                        end = VIOLATION
                        break
                elif op == HALT:
                    status = TERMINATED
                    end = THREAD_ENDED
                    break
                else:  # pragma: no cover
                    raise _Fault(f"bad opcode {op}")
                pc += 1
        except IndexError:
            count -= 1
            illegal = f"operand stack underflow in {self.functions[fid].name} at pc {pc}"
            end = VIOLATION
        except _Fault as e:
            count -= 1
            illegal = f"{e} in {self.functions[fid].name} at pc {pc}"
            end = VIOLATION

        if status == TERMINATED:
            threads[tid] = (TERMINATED, 0, (), 0, 0)
            for i, th in enumerate(threads):
                if th[0] == WAITING_JOIN and th[1] == tid:
                    threads[i] = (RUNNABLE, 0, th[2], th[3], th[4])
        else:
            frames.append((fid, pc, tuple(locs), tuple(stack)))
            threads[tid] = (status, sarg, tuple(frames), permit, depth)
        new_state = (
            tuple(threads),
            tuple(glob) if glob_w else glob,
            tuple(heap) if heap_w else heap,
            len(threads),
            assert_failed,
            illegal,
            unsupported,
        )
        return RunResult(new_state, count, end, start_fid, start_pc)

    @staticmethod
    def _array(heap, r) -> tuple:
        if type(r) is not tuple:
            raise _Fault(f"expected an array reference, got {fmt_value(r)}")
        obj = heap[r[0]]
        if obj[0] != ARRAY:
            raise _Fault(f"object #{r[0]} is not an array")
        return obj[1]

    @staticmethod
    def _library_object(heap, r, ccode, cls) -> tuple:
        if type(r) is not tuple:
            raise _Fault(f"invoke on non-object {fmt_value(r)}")
        obj = heap[r[0]]
        if obj[0] != ccode:
            raise _Fault(f"object #{r[0]} is not a {cls}")
        return obj


def enabled_threads(state: tuple) -> list[int]:
    return [t for t, th in enumerate(state[THREADS]) if th[0] == RUNNABLE]


def violation_kind(state: tuple) -> str | None:
    if state[ASSERT_FAILED]:
        return "assertion"
    if state[UNSUPPORTED] is not None:
        return "unsupported-native-method"
    if state[ILLEGAL] is not None:
        return "illegal-monitor"
    return None


def thread_status(state: tuple, tid: int) -> str:
    return STATUS_NAMES[state[THREADS][tid][0]]


def reachable_objects(state: tuple) -> set[int]:
    """Heap indices reachable from globals and every thread's frames."""
    heap = state[HEAP]
    seen: set[int] = set()
    work = []

    def scan(values):
        for v in values:
            if type(v) is tuple and v[0] not in seen:
                seen.add(v[0])
                work.append(v[0])

    scan(state[GLOBALS])
    for th in state[THREADS]:
        for _, _, locs, stack in th[2]:
            scan(locs)
            scan(stack)
    while work:
        obj = heap[work.pop()]
        if obj[0] == ARRAY:
            scan(obj[1])
    return seen
