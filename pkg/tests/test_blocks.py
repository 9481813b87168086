from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from mcheck.asm import parse_program
from mcheck.blocks import compile_block
from mcheck.vm import Machine, OPNAMES

from oracles import brute_force_transition

LOCAL = 3

simple = st.one_of(
    st.tuples(st.just("push"), st.one_of(st.integers(-3, 3), st.just(2**62), st.just("nil"))),
    st.tuples(st.sampled_from(["pop", "dup", "add", "sub", "mul", "eq", "lt", "not", "tid"]), st.none()),
    st.tuples(st.sampled_from(["load", "store"]), st.integers(0, LOCAL - 1)),
)


def render(ops) -> str:
    lines = [f"fn main(0 args, {LOCAL} locals):", "  push 1", "  push 2"]
    for i, (op, arg) in enumerate(ops):
        lines.append(f"  {op}" if arg is None else f"  {op} {arg}")
        if i % 4 == 3:
            # an occasional skip-ahead branch
            lines.append(f"  push {i % 2}")
            lines.append(f"  jz L{i}")
            lines.append("  push 9")
            lines.append(f"L{i}:")
    lines.append("  gstore g")
    lines.append("  halt")
    return "global g = 0\n" + "\n".join(lines) + "\n"


@settings(max_examples=300, deadline=None)
@given(st.lists(simple, max_size=14))
def test_fast_path_matches_single_steps(ops):
    m = Machine(parse_program(render(ops)), "abstracted")
    s = m.initial_state()
    fast = m.run(s, 0).state
    assert fast == brute_force_transition(m, s, 0)


def test_block_source_is_straight_line():
    program = parse_program("fn main(0 args, 1 locals):\n  push 2\n  push 3\n  mul\n  store 0\n  halt\n")
    m = Machine(program, "abstracted")
    blk = compile_block(m.code[m.main], OPNAMES, 0)
    assert "stack" in blk.source and "for " not in blk.source
    locs, stack = [0], []
    assert blk(locs, stack, 0) == (4, 4)
    assert locs == [6] and stack == []
