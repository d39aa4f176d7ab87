"""Incremental Datalog with provenance-driven fault localization and rollback."""

from .engine import Diff, EngineState, FactStore, apply_diff, evaluate, restrict, reverse, snapshot_edb
from .frontend import Fact, Program, check_program, parse_program

__all__ = [
    "Diff",
    "EngineState",
    "Fact",
    "FactStore",
    "Program",
    "apply_diff",
    "check_program",
    "evaluate",
    "parse_program",
    "restrict",
    "reverse",
    "snapshot_edb",
]
