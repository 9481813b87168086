"""Assembly front end: text -> validated :class:`Program`.

Line-oriented format, ``;`` starts a comment::

    const N = 3
    global counter = 0
    fn worker(1 args, 4 locals) [lib]:
    loop:
      gload counter
      ...

``include <path>`` splices another file in place (once per file). Paths
resolve against the including file's directory, then the bundled library
directory. Library sources for every class the program touches are spliced
automatically, so one program runs unchanged in both search modes.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .conclib import CLASSES, METHODS

LIB_DIR = Path(__file__).parent / "lib"

# opcode -> operand kinds
OPERANDS: dict[str, tuple[str, ...]] = {
    "push": ("value",),
    "pop": (),
    "dup": (),
    "load": ("int",),
    "store": ("int",),
    "add": (),
    "sub": (),
    "mul": (),
    "eq": (),
    "lt": (),
    "not": (),
    "jmp": ("label",),
    "jz": ("label",),
    "call": ("func", "int"),
    "ret": (),
    "tid": (),
    "gload": ("global",),
    "gstore": ("global",),
    "gcas": ("global",),
    "newarr": ("int",),
    "aload": (),
    "astore": (),
    "acas": (),
    "new": ("class",),
    "invoke": ("method", "int"),
    "spawn": ("func", "int"),
    "join": (),
    "park": (),
    "unpark": (),
    "atomic_begin": (),
    "atomic_end": (),
    "assert": (),
    "halt": (),
}

_IDENT = r"[A-Za-z_][A-Za-z0-9_.]*"
_FN_RE = re.compile(
    rf"^fn\s+({_IDENT})\s*(?:\(\s*(\d+)\s+args?\s*,\s*(\d+)\s+locals?\s*\))?\s*(\[lib\])?\s*:$"
)
_CONST_RE = re.compile(rf"^const\s+({_IDENT})\s*=\s*(.+)$")
_GLOBAL_RE = re.compile(rf"^global\s+({_IDENT})\s*=\s*(-?\d+|nil)$")
_LABEL_RE = re.compile(rf"^({_IDENT}):$")
_INT_RE = re.compile(r"^-?\d+$")
_USES_RE = re.compile(r"^\s*(?:new\s+(\w+)|invoke\s+(\w+)\.)", re.M)


class ParseError(Exception):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        where = ""
        if line is not None:
            where = f"{source or '<input>'}:{line}: "
        super().__init__(where + message)


class Instruction(NamedTuple):
    op: str
    args: tuple = ()


@dataclass
class FunctionDef:
    name: str
    nparams: int
    nlocals: int
    code: list[Instruction] = field(default_factory=list)
    lines: list[int] = field(default_factory=list)
    library: bool = False
    source: str = "<input>"


@dataclass
class Program:
    constants: dict[str, int]
    globals: dict[str, int | None]
    functions: dict[str, FunctionDef]
    entry: str = "main"

    @property
    def global_names(self) -> list[str]:
        # sorted so the state layout does not depend on declaration order
        return sorted(self.globals)


class _Line(NamedTuple):
    text: str
    lineno: int
    source: str


def _strip(raw: str) -> str:
    return raw.split(";", 1)[0].strip()


def _resolve_include(path: str, base: Path | None) -> Path:
    candidates = []
    if base is not None:
        candidates.append(base / path)
    candidates.append(LIB_DIR / path)
    candidates.append(LIB_DIR / "reference" / path)
    for c in candidates:
        if c.is_file():
            return c.resolve()
    raise FileNotFoundError(path)


def _expand(text: str, source: str, base: Path | None, seen: set[Path]) -> list[_Line]:
    out: list[_Line] = []
    for i, raw in enumerate(text.splitlines(), 1):
        s = _strip(raw)
        if not s:
            continue
        if s.startswith("include ") or s == "include":
            target = s[len("include"):].strip()
            if not target:
                raise ParseError("include needs a path", i, source)
            try:
                p = _resolve_include(target, base)
            except FileNotFoundError:
                raise ParseError(f"cannot find include '{target}'", i, source) from None
            if p in seen:
                continue
            seen.add(p)
            out.extend(_expand(p.read_text(encoding="utf-8"), p.name, p.parent, seen))
            continue
        out.append(_Line(s, i, source))
    return out


def library_path(cls: str) -> Path:
    return (LIB_DIR / "reference" / f"{cls}.asm").resolve()


def parse_program(
    text: str,
    overrides: dict[str, int] | None = None,
    *,
    source: str = "<input>",
    base_dir: str | Path | None = None,
    with_library: bool = True,
) -> Program:
    base = Path(base_dir) if base_dir is not None else None
    seen: set[Path] = set()
    lines = _expand(text, source, base, seen)
    if with_library:
        while True:
            body = "\n".join(ln.text for ln in lines)
            used = {a or b for a, b in _USES_RE.findall(body)} & set(CLASSES)
            missing = [c for c in sorted(used) if library_path(c) not in seen]
            if not missing:
                break
            for c in missing:
                p = library_path(c)
                seen.add(p)
                lines.extend(_expand(p.read_text(encoding="utf-8"), p.name, p.parent, seen))
    return _build(lines, overrides or {})


def parse_file(path: str | Path, overrides: dict[str, int] | None = None, **kw) -> Program:
    p = Path(path)
    return parse_program(
        p.read_text(encoding="utf-8"), overrides, source=p.name, base_dir=p.parent, **kw
    )


def _build(lines: list[_Line], overrides: dict[str, int]) -> Program:
    const_exprs: dict[str, tuple[str, _Line]] = {}
    globals_: dict[str, int | None] = {}
    raw_funcs: list[tuple[FunctionDef, list[tuple[str, list[str], _Line]], dict[str, int]]] = []
    cur = None

    for ln in lines:
        s = ln.text
        if s.startswith("const "):
            m = _CONST_RE.match(s)
            if not m:
                raise ParseError(f"malformed const: {s!r}", ln.lineno, ln.source)
            name = m.group(1)
            if name in const_exprs:
                raise ParseError(f"duplicate constant '{name}'", ln.lineno, ln.source)
            const_exprs[name] = (m.group(2), ln)
            continue
        if s.startswith("global "):
            m = _GLOBAL_RE.match(s)
            if not m:
                raise ParseError(f"malformed global: {s!r}", ln.lineno, ln.source)
            name = m.group(1)
            if name in globals_:
                raise ParseError(f"duplicate global '{name}'", ln.lineno, ln.source)
            globals_[name] = None if m.group(2) == "nil" else int(m.group(2))
            continue
        if s.startswith("fn "):
            m = _FN_RE.match(s)
            if not m:
                raise ParseError(f"malformed function header: {s!r}", ln.lineno, ln.source)
            nparams = int(m.group(2) or 0)
            nlocals = int(m.group(3) or 0)
            if nparams > nlocals:
                raise ParseError("more parameters than local slots", ln.lineno, ln.source)
            fd = FunctionDef(m.group(1), nparams, nlocals, library=bool(m.group(4)), source=ln.source)
            cur = (fd, [], {})
            raw_funcs.append(cur)
            continue
        if cur is None:
            raise ParseError(f"statement outside function: {s!r}", ln.lineno, ln.source)
        m = _LABEL_RE.match(s)
        if m:
            labels = cur[2]
            if m.group(1) in labels:
                raise ParseError(f"duplicate label '{m.group(1)}'", ln.lineno, ln.source)
            labels[m.group(1)] = len(cur[1])
            continue
        parts = s.split()
        cur[1].append((parts[0], parts[1:], ln))

    for name in overrides:
        if name not in const_exprs:
            raise ParseError(f"override of undeclared constant '{name}'")
    # in declaration order, so derived constants follow overridden ones
    constants: dict[str, int] = {}
    for name, (expr, ln) in const_exprs.items():
        if name in overrides:
            constants[name] = int(overrides[name])
        else:
            constants[name] = _eval_const(expr, constants, ln)

    functions: dict[str, FunctionDef] = {}
    for fd, _, _ in raw_funcs:
        if fd.name in functions:
            raise ParseError(f"duplicate function '{fd.name}'")
        functions[fd.name] = fd

    for fd, body, labels in raw_funcs:
        for op, operands, ln in body:
            fd.code.append(_instruction(op, operands, ln, fd, labels, constants, globals_, functions))
            fd.lines.append(ln.lineno)
        # falling off the end returns
        fd.code.append(Instruction("ret"))
        fd.lines.append(fd.lines[-1] if fd.lines else 0)

    if "main" not in functions:
        raise ParseError("program has no 'main' function")
    if functions["main"].nparams:
        raise ParseError("'main' must take no arguments")
    return Program(constants, globals_, functions)


_CONST_OPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b, ast.Mult: lambda a, b: a * b}


def _eval_const(expr: str, constants: dict[str, int], ln: _Line) -> int:
    """Integer literal or +, -, * over literals and earlier constants."""
    def ev(node):
        if isinstance(node, ast.Constant) and type(node.value) is int:
            return node.value
        if isinstance(node, ast.Name) and node.id in constants:
            return constants[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.BinOp) and type(node.op) in _CONST_OPS:
            return _CONST_OPS[type(node.op)](ev(node.left), ev(node.right))
        raise ParseError(f"bad constant expression {expr!r}", ln.lineno, ln.source)

    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError:
        raise ParseError(f"bad constant expression {expr!r}", ln.lineno, ln.source) from None
    return ev(tree.body)


def _instruction(op, operands, ln, fd, labels, constants, globals_, functions) -> Instruction:
    def fail(msg):
        raise ParseError(msg, ln.lineno, ln.source)

    kinds = OPERANDS.get(op)
    if kinds is None:
        fail(f"unknown opcode '{op}'")
    if len(operands) != len(kinds):
        fail(f"'{op}' takes {len(kinds)} operand(s), got {len(operands)}")

    def as_int(tok):
        if _INT_RE.match(tok):
            return int(tok)
        if tok in constants:
            return constants[tok]
        fail(f"unknown constant '{tok}'")

    args: list = []
    for kind, tok in zip(kinds, operands):
        if kind == "value":
            args.append(None if tok == "nil" else as_int(tok))
        elif kind == "int":
            args.append(as_int(tok))
        elif kind == "label":
            if tok not in labels:
                fail(f"unknown label '{tok}'")
            args.append(labels[tok])
        elif kind == "func":
            if tok not in functions:
                fail(f"unknown function '{tok}'")
            args.append(tok)
        elif kind == "global":
            if tok not in globals_:
                fail(f"unknown global '{tok}'")
            args.append(tok)
        elif kind == "class":
            if tok not in CLASSES:
                fail(f"unknown class '{tok}'")
            args.append(tok)
        elif kind == "method":
            cls, _, meth = tok.partition(".")
            if cls not in CLASSES or not meth:
                fail(f"unknown class in '{tok}'")
            args.extend((cls, meth))

    if op in ("load", "store") and not 0 <= args[0] < fd.nlocals:
        fail(f"local index {args[0]} out of range for '{fd.name}'")
    if op == "newarr" and args[0] < 0:
        fail("negative array size")
    if op in ("call", "spawn"):
        target = functions[args[0]]
        if args[1] != target.nparams:
            fail(f"'{args[0]}' takes {target.nparams} argument(s), got {args[1]}")
    if op == "invoke":
        cls, meth, argc = args
        # unknown method names are a runtime failure (missing native), not a syntax error
        if meth in METHODS[cls] and METHODS[cls][meth] != argc:
            fail(f"{cls}.{meth} takes {METHODS[cls][meth]} argument(s), got {argc}")
    return Instruction(op, tuple(args))
