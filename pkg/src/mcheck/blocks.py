"""Straight-line block compilation for the interpreter's fast path.

Every pc whose instruction only touches the frame (operand stack, locals,
thread id) starts a block: the longest run of such instructions, ending
before the next shared-memory or thread operation or just after a jump.
A block is turned into a small Python function that works on named
temporaries and writes the frame back only at its end. Anything unusual
(a type error, stack underflow) raises before the write-back, so the caller
can rerun the same instructions through the one-instruction interpreter,
which owns all error reporting.
"""

from __future__ import annotations

from .conclib import wrap

# opcode numbers are passed in by the caller to avoid an import cycle
_LOCAL_OPS = ("push", "pop", "dup", "load", "store", "add", "sub", "mul", "eq", "lt", "not", "tid", "jmp", "jz")

_INT_MIN = -(1 << 63)
_INT_MAX = (1 << 63) - 1


class Bail(Exception):
    """A block cannot finish without faulting; replay it step by step."""


class _Gen:
    def __init__(self):
        self.lines: list[str] = []
        self.sym: list[str] = []  # symbolic operand stack, top last
        self.ints: set[str] = set()  # expressions known to hold ints
        self.need = 0  # entries consumed from the real stack
        self.cur: dict[int, str] = {}  # local slot -> current expression
        self.dirty: set[int] = set()
        self.n = 0

    def temp(self) -> str:
        self.n += 1
        return f"t{self.n}"

    def pop(self) -> str:
        if self.sym:
            return self.sym.pop()
        self.need += 1
        return f"s{self.need}"

    def push(self, expr: str, is_int: bool = False):
        self.sym.append(expr)
        if is_int:
            self.ints.add(expr)

    def require_int(self, *exprs: str):
        todo = [e for e in exprs if e not in self.ints]
        if todo:
            cond = " or ".join(f"type({e}) is not int" for e in todo)
            self.lines.append(f"if {cond}: raise Bail")
            self.ints.update(todo)

    def load(self, i: int) -> str:
        if i not in self.cur:
            name = f"l{i}"
            self.lines.append(f"{name} = locs[{i}]")
            self.cur[i] = name
        return self.cur[i]

    def commit(self) -> list[str]:
        out = []
        if self.need:
            out.append(f"del stack[-{self.need}:]")
        if len(self.sym) == 1:
            out.append(f"stack.append({self.sym[0]})")
        elif self.sym:
            out.append(f"stack.extend(({', '.join(self.sym)},))")
        for i in sorted(self.dirty):
            out.append(f"locs[{i}] = {self.cur[i]}")
        return out


def _arith(g: _Gen, expr: str):
    b = g.pop()
    a = g.pop()
    g.require_int(a, b)
    t = g.temp()
    g.lines.append(f"{t} = {expr.format(a=a, b=b)}")
    g.lines.append(f"if not {_INT_MIN} <= {t} <= {_INT_MAX}: {t} = wrap({t})")
    g.push(t, True)


def compile_block(code: list[tuple], names: dict[int, str], start: int):
    """Return ``f(locs, stack, tid) -> (next_pc, executed)`` or None."""
    g = _Gen()
    pc = start
    end_expr = None
    while pc < len(code) and names.get(code[pc][0]) in _LOCAL_OPS:
        ins = code[pc]
        op = names[ins[0]]
        pc += 1
        if op == "push":
            v = ins[1]
            g.push(repr(v), type(v) is int)
        elif op == "pop":
            g.pop()
        elif op == "dup":
            v = g.pop()
            g.push(v)
            g.push(v)
        elif op == "load":
            g.push(g.load(ins[1]))
        elif op == "store":
            g.cur[ins[1]] = g.pop()
            g.dirty.add(ins[1])
        elif op == "tid":
            g.push("tid", True)
        elif op == "add":
            _arith(g, "{a} + {b}")
        elif op == "sub":
            _arith(g, "{a} - {b}")
        elif op == "mul":
            _arith(g, "{a} * {b}")
        elif op == "eq":
            b = g.pop()
            a = g.pop()
            t = g.temp()
            g.lines.append(f"{t} = 1 if {a} == {b} else 0")
            g.push(t, True)
        elif op == "lt":
            b = g.pop()
            a = g.pop()
            g.require_int(a, b)
            t = g.temp()
            g.lines.append(f"{t} = 1 if {a} < {b} else 0")
            g.push(t, True)
        elif op == "not":
            a = g.pop()
            g.require_int(a)
            t = g.temp()
            g.lines.append(f"{t} = 1 if {a} == 0 else 0")
            g.push(t, True)
        elif op == "jmp":
            end_expr = str(ins[1])
            break
        elif op == "jz":
            c = g.pop()
            g.require_int(c)
            end_expr = f"{ins[1]} if {c} == 0 else {pc}"
            break
    executed = pc - start
    if executed == 0:
        return None
    if end_expr is None:
        end_expr = str(pc)
    reads = [f"s{k} = stack[-{k}]" for k in range(1, g.need + 1)]
    body = reads + g.lines + g.commit() + [f"return {end_expr}, {executed}"]
    src = "def block(locs, stack, tid):\n" + "".join(f"    {ln}\n" for ln in body)
    env = {"Bail": Bail, "wrap": wrap}
    exec(compile(src, f"<block {start}>", "exec"), env)
    fn = env["block"]
    fn.source = src
    return fn


def compile_function(code: list[tuple], names: dict[int, str]) -> list:
    return [compile_block(code, names, pc) for pc in range(len(code))]
