"""Explicit-state model checking of a small concurrent stack-machine language.

Library objects (lock, atomicint, map) run either as interpreted code
("reference" mode) or through host-side peers that keep one interned
version integer per object in the tracked state ("abstracted" mode).
"""

from .asm import ParseError, Program, parse_file, parse_program
from .explorer import SearchConfig, explore, replay
from .report import SearchReport, Violation, render_report

__all__ = [
    "ParseError",
    "Program",
    "SearchConfig",
    "SearchReport",
    "Violation",
    "explore",
    "parse_file",
    "parse_program",
    "render_report",
    "replay",
]
__version__ = "0.1.0"
