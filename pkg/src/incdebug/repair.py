"""Fault localization and rollback over an EDB diff.

Two engines are kept for a session: the forward one sits at ``E2`` with
``d`` as its last diff, the reverse one sits at ``E1`` with ``reverse(d)``
as its last diff.  Unwanted tuples are handled on the forward engine and
missing tuples on the reverse engine, where they are ordinary inserted
tuples; a result computed there is translated back by reversing it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .engine import DeltaIDB, Diff, EngineState, FactStore, evaluate, reverse, subtract
from .errors import (
    DeltaDebugTimeout,
    EnumerationBudgetExceeded,
    FaultSpecError,
    IlpInfeasible,
    NotInDelta,
    StratumLoopExceeded,
)
from .frontend import Fact, Program
from .ilp import DEFAULT_NODE_BUDGET, NEG, POS, encode, encode_derivations, solve
from .provenance import DEFAULT_TREE_LIMIT, affected_derivations, all_proof_trees, incremental_provenance

LOCALIZATION = "localization"
ROLLBACK = "rollback"

# How rollback builds its ILP: from enumerated proof trees, from the affected
# derivation graph, or trees first with the graph once the tree limit is hit.
ENCODINGS = ("auto", "trees", "graph")


@dataclass(frozen=True)
class IntendedOutput:
    desirable: frozenset = frozenset()
    undesirable: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "desirable", frozenset(self.desirable))
        object.__setattr__(self, "undesirable", frozenset(self.undesirable))
        both = self.desirable & self.undesirable
        if both:
            raise FaultSpecError(f"{min(both)} is both desirable and undesirable")

    def check(self, program: Program) -> None:
        for f in self.desirable | self.undesirable:
            if program.is_edb(f.relation) or f.relation not in program.relations:
                raise FaultSpecError(f"{f} is not an IDB tuple")

    def violations(self, s: EngineState) -> "FaultSet":
        return FaultSet(
            frozenset(f for f in self.undesirable if f in s),
            frozenset(f for f in self.desirable if f not in s),
        )


@dataclass(frozen=True)
class FaultSet:
    appearing: frozenset = frozenset()
    missing: frozenset = frozenset()

    def __bool__(self) -> bool:
        return bool(self.appearing or self.missing)

    def all(self) -> frozenset:
        return self.appearing | self.missing


@dataclass(frozen=True)
class IlpStats:
    variables: int = 0
    constraints: int = 0
    nodes: int = 0

    def __add__(self, other: "IlpStats") -> "IlpStats":
        return IlpStats(
            self.variables + other.variables, self.constraints + other.constraints, self.nodes + other.nodes
        )


@dataclass
class RepairResult:
    tuples: Diff
    kind: str
    engine_invocations: int = 0
    initializations: int = 0
    ilp_stats: IlpStats = field(default_factory=IlpStats)
    rounds: int = 0
    complete: bool = True
    passes: int = 0
    fallback: bool = False
    graph_encodings: int = 0

    def __len__(self) -> int:
        return len(self.tuples)

    def footer(self) -> list[str]:
        s = self.ilp_stats
        return [
            f"kind: {self.kind}",
            f"size: {len(self.tuples)}",
            f"engine_invocations: {self.engine_invocations}",
            f"initializations: {self.initializations}",
            f"rounds: {self.rounds}",
            f"passes: {self.passes}",
            f"fallback: {str(self.fallback).lower()}",
            f"graph_encodings: {self.graph_encodings}",
            f"ilp: {s.variables} variables, {s.constraints} constraints, {s.nodes} nodes",
            f"complete: {str(self.complete).lower()}",
        ]


@dataclass(frozen=True)
class StepResult:
    """Output of one localization or rollback step.

    ``entries`` are signed diff entries; ``negated`` are IDB tuples whose
    absence the step relies on changing, to be handled as faults of the
    opposite kind.
    """

    entries: Diff
    negated: frozenset = frozenset()
    stats: IlpStats = field(default_factory=IlpStats)
    graph: bool = False


def _delta_of(s: EngineState, d: Diff) -> DeltaIDB:
    if s.last_diff != d:
        raise ValueError("the engine's last applied diff must be d")
    return s.last_delta


def _check_faults(s: EngineState, d: Diff, faults: Iterable[Fact]) -> list[Fact]:
    delta = _delta_of(s, d)
    out = sorted(set(faults))
    for t in out:
        if t not in delta.inserted and t not in d.insertions:
            raise NotInDelta(t)
    return out


def _signed(d: Diff, positive: Iterable[Fact], negative: Iterable[Fact]) -> Diff:
    """Diff entries for diff tuples kept positive or required absent."""
    return Diff(d.insertions & set(positive), d.deletions & set(negative))


def localize_faults(fwd: EngineState, d: Diff, faults: Iterable[Fact]) -> StepResult:
    """Union of the diff entries in one incremental proof tree per fault."""
    faults = _check_faults(fwd, d, faults)
    delta = fwd.last_delta
    pos: set[Fact] = set()
    neg: set[Fact] = set()
    for t in faults:
        tree, prov = incremental_provenance(fwd, t, d, delta)
        pos |= prov
        neg |= {f for f, changed in tree.negated_leaves() if changed}
    idb_neg = frozenset(f for f in neg if not fwd.program.is_edb(f.relation))
    return StepResult(_signed(d, pos, neg), idb_neg)


def rollback_repair(
    fwd: EngineState,
    d: Diff,
    faults: Iterable[Fact],
    *,
    limit: int = DEFAULT_TREE_LIMIT,
    node_budget: int = DEFAULT_NODE_BUDGET,
    encoding: str = "auto",
) -> StepResult:
    """Smallest set of diff entries to drop so no fault keeps a proof tree.

    With ``encoding="auto"`` a fault family with more than ``limit`` trees is
    encoded from its derivation graph instead; ``"trees"`` raises
    :class:`EnumerationBudgetExceeded` in that case.
    """
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}")
    faults = _check_faults(fwd, d, faults)
    if not faults:
        return StepResult(Diff())
    delta = fwd.last_delta
    graph = encoding == "graph"
    if not graph:
        try:
            trees = {t: all_proof_trees(fwd, t, d, limit, delta) for t in faults}
        except EnumerationBudgetExceeded:
            if encoding == "trees":
                raise
            graph = True
    if graph:
        derivations = [der for t in faults for der in affected_derivations(fwd, t, d, delta)]
        enc = encode_derivations(derivations, faults, d.tuples())
    else:
        enc = encode(trees, faults, d.tuples())
    sol = solve(enc.instance, node_budget)
    stats = IlpStats(len(enc.instance.variables), len(enc.instance.constraints), sol.nodes_explored)
    if not sol.feasible:
        raise IlpInfeasible("rollback encoding has no solution")
    zeros = enc.zeros(sol)
    pos = {f for p, f in zeros if p == POS}
    neg = {f for p, f in zeros if p == NEG}
    idb_neg = frozenset(f for f in neg if not fwd.program.is_edb(f.relation))
    return StepResult(_signed(d, pos, neg), idb_neg, stats, graph)


@dataclass
class Session:
    """Forward and reverse engines for one ``(P, E1, d)`` problem."""

    program: Program
    diff: Diff
    forward: EngineState
    backward: EngineState
    initializations: int = 1

    @classmethod
    def start(cls, program: Program, e1: FactStore | Iterable[Fact], d: Diff) -> "Session":
        first = evaluate(program, e1)
        first.apply(d)
        back = first.copy()
        back.apply(reverse(d))
        return cls(program, d, first, back)


def _worklist(
    fwd: EngineState,
    back: EngineState,
    d: Diff,
    appearing: set[Fact],
    missing: set[Fact],
    kind: str,
    bound: int,
    limit: int,
    node_budget: int,
    encoding: str,
) -> tuple[Diff, IlpStats, int, int]:
    """One run of the fault worklist: entries of ``d``, ILP totals, rounds, graph encodings."""
    rd = reverse(d)
    graphs = 0

    def forward_step(f):
        if kind == ROLLBACK:
            return rollback_repair(fwd, d, f, limit=limit, node_budget=node_budget, encoding=encoding)
        return localize_faults(fwd, d, f)

    def backward_step(f):
        if kind == ROLLBACK:
            return localize_faults(back, rd, f)
        return rollback_repair(back, rd, f, limit=limit, node_budget=node_budget, encoding=encoding)

    ins: set[Fact] = set()
    dels: set[Fact] = set()
    stats = IlpStats()
    handled_app: set[Fact] = set()
    handled_mis: set[Fact] = set()
    rounds = 0
    while appearing or missing:
        rounds += 1
        if rounds > bound:
            raise StratumLoopExceeded(bound)
        if appearing:
            step = forward_step(appearing)
            graphs += step.graph
            handled_app |= appearing
            ins |= step.entries.insertions
            dels |= step.entries.deletions
            stats += step.stats
            missing |= step.negated - handled_mis
            appearing = set()
        if missing:
            step = backward_step(missing)
            graphs += step.graph
            handled_mis |= missing
            back_entries = reverse(step.entries)
            ins |= back_entries.insertions
            dels |= back_entries.deletions
            stats += step.stats
            appearing |= step.negated - handled_app
            missing = set()
    return Diff(ins, dels), stats, rounds, graphs


def _engines(base: EngineState, d: Diff) -> tuple[EngineState, EngineState]:
    """Forward engine at ``base + d`` and reverse engine back at ``base``, both incremental."""
    fwd = base.copy()
    fwd.apply(d)
    back = fwd.copy()
    back.apply(reverse(d))
    return fwd, back


def _union(a: Diff, b: Diff) -> Diff:
    return Diff(a.insertions | b.insertions, a.deletions | b.deletions)


def _full(
    program: Program,
    e1,
    d: Diff,
    io: IntendedOutput,
    kind: str,
    *,
    limit: int,
    node_budget: int,
    session: Session | None,
    encoding: str = "auto",
) -> RepairResult:
    io.check(program)
    sess = session or Session.start(program, e1, d)
    faults = io.violations(sess.forward)
    for t in sorted(faults.appearing):
        if t not in sess.forward.last_delta.inserted:
            raise NotInDelta(t)
    for t in sorted(faults.missing):
        if t not in sess.forward.last_delta.deleted:
            raise NotInDelta(t)
    bound = len(program.strata) + 1
    e1_state = sess.backward  # sits at E1
    fwd, back = sess.forward, sess.backward
    chosen = Diff()
    stats = IlpStats()
    rounds = passes = graphs = 0
    remaining = d
    pending = (set(faults.appearing), set(faults.missing))
    fallback = False
    # Each pass solves the residual problem left by the previous ones and is
    # re-checked on incrementally updated engines; the whole diff is always
    # a valid answer, so it is the last resort.
    while pending[0] or pending[1]:
        passes += 1
        if passes > len(d) + 1:
            fallback = True
            break
        step, s, r, g = _worklist(fwd, back, remaining, *pending, kind, bound, limit, node_budget, encoding)
        stats += s
        rounds += r
        graphs += g
        if not step:
            fallback = True
            break
        chosen = _union(chosen, step)
        if kind == ROLLBACK:
            remaining = subtract(d, chosen)
            fwd, back = _engines(e1_state, remaining)
            left = io.violations(fwd)
            pending = (set(left.appearing), set(left.missing))
        else:
            remaining = subtract(d, chosen)
            base = e1_state.copy()
            base.apply(chosen)
            fwd, back = _engines(base, remaining)
            pending = (
                {t for t in faults.appearing if t not in base},
                {t for t in faults.missing if t in base},
            )
    if fallback:
        chosen = d
    return RepairResult(
        chosen,
        kind,
        engine_invocations=0,
        initializations=sess.initializations,
        ilp_stats=stats,
        rounds=rounds,
        passes=passes,
        fallback=fallback,
        graph_encodings=graphs,
    )


def full_rollback_repair(
    program: Program,
    e1,
    d: Diff,
    io: IntendedOutput,
    *,
    limit: int = DEFAULT_TREE_LIMIT,
    node_budget: int = DEFAULT_NODE_BUDGET,
    session: Session | None = None,
    encoding: str = "auto",
) -> RepairResult:
    return _full(
        program, e1, d, io, ROLLBACK, limit=limit, node_budget=node_budget, session=session, encoding=encoding
    )


def full_localize(
    program: Program,
    e1,
    d: Diff,
    io: IntendedOutput,
    *,
    limit: int = DEFAULT_TREE_LIMIT,
    node_budget: int = DEFAULT_NODE_BUDGET,
    session: Session | None = None,
    encoding: str = "auto",
) -> RepairResult:
    return _full(
        program, e1, d, io, LOCALIZATION, limit=limit, node_budget=node_budget, session=session, encoding=encoding
    )


# ---------------------------------------------------------------------------
# oracles and the delta-debugging baseline


def _edb_facts(e1) -> set[Fact]:
    if isinstance(e1, FactStore):
        return set(e1.facts())
    return set(e1)


def apply_to(e1, d: Diff) -> set[Fact]:
    return (_edb_facts(e1) - d.deletions) | d.insertions


def reproduces(program: Program, e1, sub: Diff, faults: FaultSet) -> bool:
    """Does ``E1`` with only ``sub`` applied exhibit every fault?"""
    s = evaluate(program, apply_to(e1, sub))
    return all(f in s for f in faults.appearing) and not any(f in s for f in faults.missing)


def eliminates(program: Program, e1, d: Diff, removed: Diff, faults: FaultSet) -> bool:
    """Does ``E1`` with ``d`` minus ``removed`` applied avoid every fault?"""
    s = evaluate(program, apply_to(e1, subtract(d, removed)))
    return not any(f in s for f in faults.appearing) and all(f in s for f in faults.missing)


def verify(program: Program, e1, d: Diff, faults: FaultSet, result: RepairResult) -> bool:
    if result.kind == LOCALIZATION:
        return reproduces(program, e1, result.tuples, faults)
    return eliminates(program, e1, d, result.tuples, faults)


def ddmin(items: list, test: Callable[[list], bool], on_progress: Callable[[list], None] | None = None) -> list:
    """Zeller's ddmin: a 1-minimal sublist of ``items`` passing ``test``.

    ``test(items)`` is assumed to hold.  The empty list is tried first.
    """
    if test([]):
        return []
    current = list(items)
    n = 2
    while len(current) >= 2:
        chunks = _split(current, n)
        reduced = False
        for chunk in chunks:
            if test(chunk):
                current, n, reduced = chunk, 2, True
                break
        if not reduced:
            for i in range(len(chunks)):
                rest = [x for j, c in enumerate(chunks) if j != i for x in c]
                if test(rest):
                    current, n, reduced = rest, max(n - 1, 2), True
                    break
        if reduced:
            if on_progress:
                on_progress(current)
            continue
        if n >= len(current):
            break
        n = min(len(current), 2 * n)
    return current


def _split(items: list, n: int) -> list[list]:
    out, start = [], 0
    for i in range(n):
        stop = start + (len(items) - start) // (n - i)
        out.append(items[start:stop])
        start = stop
    return [c for c in out if c]


def delta_debug(
    program: Program,
    e1,
    d: Diff,
    io: IntendedOutput,
    mode: str = ROLLBACK,
    *,
    timeout: float | None = 600.0,
    clock: Callable[[], float] = time.monotonic,
) -> RepairResult:
    """Baseline: ddmin over signed diff entries, one full evaluation per test."""
    io.check(program)
    kind = ROLLBACK if mode in (ROLLBACK, "rollback") else LOCALIZATION
    base = _edb_facts(e1)
    faults = io.violations(evaluate(program, apply_to(base, d)))
    entries = d.entries()
    cache: dict[frozenset, bool] = {}
    calls = 0
    best = list(entries)
    start = clock()

    def test(subset: list) -> bool:
        nonlocal calls
        key = frozenset(subset)
        if key in cache:
            return cache[key]
        if timeout is not None and clock() - start > timeout:
            partial = RepairResult(
                Diff.from_entries(best), kind, engine_invocations=calls, initializations=1, complete=False
            )
            raise DeltaDebugTimeout(timeout, partial)
        calls += 1
        sub = Diff.from_entries(subset)
        if kind == LOCALIZATION:
            ok = reproduces(program, base, sub, faults)
        else:
            ok = eliminates(program, base, d, sub, faults)
        cache[key] = ok
        return ok

    def progress(current):
        nonlocal best
        best = current

    found = ddmin(entries, test, progress)
    return RepairResult(Diff.from_entries(found), kind, engine_invocations=calls, initializations=1)
