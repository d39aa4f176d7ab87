"""Seeded random problem instances for tests, scripts and benchmarks."""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field

from .engine import Diff, evaluate
from .frontend import Fact, Program, check_program, parse_program
from .repair import IntendedOutput

TC_SOURCE = """
path(X, Y) :- edge(X, Y).
path(X, Z) :- edge(X, Y), path(Y, Z).
"""

REACH_SOURCE = """
reach(X) :- source(X).
reach(Y) :- reach(X), edge(X, Y).
"""

POINTSTO_SOURCE = """
vpt(Var, Obj) :- new(Var, Obj).
vpt(Var, Obj) :- assign(Var, Var2), vpt(Var2, Obj).
vpt(Var, Obj) :- load(Var, Inter, F), store(Inter2, F, Var2),
                 vpt(Inter, InterObj), vpt(Inter2, InterObj), vpt(Var2, Obj).
alias(V1, V2) :- vpt(V1, Obj), vpt(V2, Obj), V1 != V2.
"""

GUARD_SOURCE = """
path(X, Y) :- edge(X, Y).
path(X, Z) :- path(X, Y), edge(Y, Z).
shield(Y) :- guard(G), path(G, Y).
alarm(X) :- source(X), path(X, Y), target(Y), !shield(Y).
quiet(X) :- source(X), !alarm(X).
"""


def _program(source: str) -> Program:
    return check_program(parse_program(source))


@dataclass
class Instance:
    """A program, a base EDB, a diff, and an intended output violated by the diff."""

    name: str
    program: Program
    e1: frozenset
    diff: Diff
    io: IntendedOutput
    params: dict = field(default_factory=dict)
    negation: bool = False

    @property
    def faults(self) -> frozenset:
        return self.io.desirable | self.io.undesirable


@dataclass(frozen=True)
class GraphParams:
    nodes: int = 12
    edges: int = 18
    insertions: int = 4
    deletions: int = 0
    faults: int = 1
    missing_faults: int = 0


def _pick_faults(rnd: random.Random, program: Program, e1: set, d: Diff, n_app: int, n_mis: int,
                 relations: tuple[str, ...] | None = None) -> IntendedOutput | None:
    s1 = evaluate(program, e1)
    s1.apply(d)
    delta = s1.last_delta

    def ok(f):
        return relations is None or f.relation in relations

    appeared = sorted(f for f in delta.inserted if ok(f))
    vanished = sorted(f for f in delta.deleted if ok(f))
    if n_app and not appeared and not (n_mis and vanished):
        return None
    if n_mis and not vanished and not (n_app and appeared):
        return None
    und = rnd.sample(appeared, min(n_app, len(appeared)))
    des = rnd.sample(vanished, min(n_mis, len(vanished)))
    if not und and not des:
        return None
    return IntendedOutput(frozenset(des), frozenset(und))


def _random_diff(rnd, e1: set, candidates: list, n_ins: int, n_del: int) -> Diff:
    fresh = [f for f in candidates if f not in e1]
    ins = set(rnd.sample(fresh, min(n_ins, len(fresh))))
    present = sorted(e1)
    dels = set(rnd.sample(present, min(n_del, len(present))))
    return Diff(ins, dels)


def _retry(builder, seed: int, attempts: int = 200):
    rnd = random.Random(seed)
    for _ in range(attempts):
        inst = builder(rnd)
        if inst is not None:
            return inst
    raise RuntimeError(f"no instance with faults found for seed {seed}")


def transitive_closure(seed: int, p: GraphParams = GraphParams()) -> Instance:
    prog = _program(TC_SOURCE)
    all_edges = [Fact("edge", (a, b)) for a in range(p.nodes) for b in range(p.nodes) if a != b]

    def build(rnd):
        e1 = set(rnd.sample(all_edges, min(p.edges, len(all_edges))))
        d = _random_diff(rnd, e1, all_edges, p.insertions, p.deletions)
        io = _pick_faults(rnd, prog, e1, d, p.faults, p.missing_faults)
        if io is None:
            return None
        return Instance(f"tc-{seed}", prog, frozenset(e1), d, io, {"seed": seed, **asdict(p)})

    return _retry(build, seed)


@dataclass(frozen=True)
class DiamondParams:
    layers: int = 3
    width: int = 3
    base_fraction: float = 0.5
    faults: int = 1


def diamond_chains(seed: int, p: DiamondParams = DiamondParams()) -> Instance:
    """Junction nodes joined by ``width`` parallel two-edge branches per layer.

    Some branch edges exist before the diff and the rest are inserted by it;
    the fault is reachability of the last junction.  Several diff edges
    usually have to go at once, which separates optimal from 1-minimal repairs.
    """
    prog = _program(REACH_SOURCE)

    def build(rnd):
        e1 = {Fact("source", ("j0",))}
        ins = set()
        for layer in range(p.layers):
            a, b = f"j{layer}", f"j{layer + 1}"
            for w in range(p.width):
                mid = f"m{layer}_{w}"
                for edge in (Fact("edge", (a, mid)), Fact("edge", (mid, b))):
                    (e1 if rnd.random() < p.base_fraction else ins).add(edge)
        d = Diff(ins, ())
        goal = Fact("reach", (f"j{p.layers}",))
        s = evaluate(prog, e1 | ins)
        if goal not in s or goal in evaluate(prog, e1):
            return None
        io = IntendedOutput((), {goal})
        return Instance(f"diamond-{seed}", prog, frozenset(e1), d, io, {"seed": seed, **asdict(p)})

    return _retry(build, seed)


@dataclass(frozen=True)
class PointsToParams:
    variables: int = 8
    objects: int = 4
    fields: int = 2
    statements: int = 14
    insertions: int = 4
    deletions: int = 0
    faults: int = 1
    missing_faults: int = 0


def _statements(p: PointsToParams) -> list[Fact]:
    vs = [f"v{i}" for i in range(p.variables)]
    objs = [f"o{i}" for i in range(p.objects)]
    fs = [f"f{i}" for i in range(p.fields)]
    out = [Fact("new", (v, o)) for v in vs for o in objs]
    out += [Fact("assign", (a, b)) for a in vs for b in vs if a != b]
    out += [Fact("load", (a, b, f)) for a in vs for b in vs for f in fs if a != b]
    out += [Fact("store", (a, f, b)) for a in vs for b in vs for f in fs if a != b]
    return out


def points_to(seed: int, p: PointsToParams = PointsToParams()) -> Instance:
    prog = _program(POINTSTO_SOURCE)
    stmts = _statements(p)
    news = [f for f in stmts if f.relation == "new"]

    def build(rnd):
        e1 = set(rnd.sample(news, min(p.objects, len(news))))
        e1 |= set(rnd.sample(stmts, p.statements))
        d = _random_diff(rnd, e1, stmts, p.insertions, p.deletions)
        io = _pick_faults(rnd, prog, e1, d, p.faults, p.missing_faults)
        if io is None:
            return None
        return Instance(f"pointsto-{seed}", prog, frozenset(e1), d, io, {"seed": seed, **asdict(p)})

    return _retry(build, seed)


@dataclass(frozen=True)
class GuardParams:
    nodes: int = 8
    edges: int = 10
    insertions: int = 3
    deletions: int = 3
    faults: int = 1
    missing_faults: int = 1


def guarded_reachability(seed: int, p: GuardParams = GuardParams()) -> Instance:
    """Reachability with a negated shield and a negated alarm, three strata deep."""
    prog = _program(GUARD_SOURCE)
    ns = list(range(p.nodes))
    edges = [Fact("edge", (a, b)) for a in ns for b in ns if a != b]
    guards = [Fact("guard", (n,)) for n in ns]

    def build(rnd):
        e1 = set(rnd.sample(edges, p.edges))
        e1 |= set(rnd.sample(guards, 2))
        e1 |= {Fact("source", (n,)) for n in rnd.sample(ns, 2)}
        e1 |= {Fact("target", (n,)) for n in rnd.sample(ns, 2)}
        d = _random_diff(rnd, e1, edges + guards, p.insertions, p.deletions)
        io = _pick_faults(rnd, prog, e1, d, p.faults, p.missing_faults, ("alarm", "quiet", "shield"))
        if io is None:
            return None
        return Instance(f"guard-{seed}", prog, frozenset(e1), d, io, {"seed": seed, **asdict(p)}, True)

    return _retry(build, seed)


GENERATORS = {
    "tc": (transitive_closure, GraphParams),
    "diamond": (diamond_chains, DiamondParams),
    "pointsto": (points_to, PointsToParams),
    "guard": (guarded_reachability, GuardParams),
}


def generate(kind: str, seed: int, **params) -> Instance:
    fn, cls = GENERATORS[kind]
    return fn(seed, cls(**params))


def random_tc_program() -> Program:
    return _program(TC_SOURCE)
