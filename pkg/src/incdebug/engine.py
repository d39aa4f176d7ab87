"""Bottom-up evaluation with per-iteration derivation counts.

Every stored tuple carries a map ``iteration -> count``.  For an IDB tuple
``t`` of stratum ``s`` the entry at iteration ``k`` is the number of ground
rule instances deriving ``t`` whose highest body iteration is ``k - 1``;
tuples of the EDB or of earlier strata sit at iteration 0 inside ``s``.
The iteration of ``t`` is the smallest key with a positive count, which is
also the height of its shortest proof tree within the stratum.

``EngineState.apply`` maintains these maps under EDB diffs without
re-evaluating: for each stratum it walks the iterations upwards and, at
iteration ``k``, joins the tuples whose membership in stage ``k - 1``
differs between the old and the new world against the rest of the body
(new world to the left of the changed atom, old world to the right).  The
resulting signed instance counts are differenced across stages to give
per-iteration count changes.
"""

from __future__ import annotations

import sys
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .errors import DatalogError, DiffConflict, TupleAbsent
from .frontend import EDB, Atom, Fact, Program, Rule, Var, check_fact

NO_LEVEL = sys.maxsize


class Relation:
    """Rows of one relation with lazily built hash indices on column subsets."""

    __slots__ = ("name", "arity", "rows", "_indices")

    def __init__(self, name: str, arity: int):
        self.name = name
        self.arity = arity
        self.rows: dict[tuple, dict[int, int]] = {}
        self._indices: dict[tuple, dict[tuple, set]] = {}

    def lookup(self, cols: tuple, key: tuple):
        if not cols:
            return self.rows.keys()
        index = self._indices.get(cols)
        if index is None:
            index = defaultdict(set)
            for values in self.rows:
                index[tuple(values[c] for c in cols)].add(values)
            self._indices[cols] = index
        return index.get(key, ())

    def counts(self, values: tuple) -> dict[int, int]:
        """Count map of a row, creating an empty row if needed."""
        counts = self.rows.get(values)
        if counts is None:
            counts = self.rows[values] = {}
            for cols, index in self._indices.items():
                index[tuple(values[c] for c in cols)].add(values)
        return counts

    def discard(self, values: tuple) -> None:
        if self.rows.pop(values, None) is None:
            return
        for cols, index in self._indices.items():
            key = tuple(values[c] for c in cols)
            bucket = index.get(key)
            if bucket is not None:
                bucket.discard(values)
                if not bucket:
                    del index[key]

    def present(self, values: tuple) -> bool:
        return bool(self.rows.get(values))

    def level(self, values: tuple) -> int:
        counts = self.rows.get(values)
        return min(counts) if counts else NO_LEVEL

    def copy(self) -> "Relation":
        other = Relation(self.name, self.arity)
        other.rows = {v: dict(c) for v, c in self.rows.items() if c}
        return other

    def __len__(self) -> int:
        return sum(1 for c in self.rows.values() if c)

    def __iter__(self) -> Iterator[tuple]:
        return (v for v, c in self.rows.items() if c)


@dataclass(frozen=True)
class TupleAnnotation:
    count: int
    iteration: int
    per_iteration: tuple = ()


class FactStore:
    """A set of relations; each present tuple maps to its annotation."""

    def __init__(self, relations: dict[str, int] | None = None):
        self.relations: dict[str, Relation] = {}
        for name, arity in (relations or {}).items():
            self.relations[name] = Relation(name, arity)

    @classmethod
    def for_program(cls, program: Program, kind: str) -> "FactStore":
        return cls({r: info.arity for r, info in program.relations.items() if info.kind == kind})

    @classmethod
    def from_facts(cls, program: Program, facts: Iterable[Fact]) -> "FactStore":
        store = cls.for_program(program, EDB)
        for f in facts:
            store.add(f)
        return store

    def relation(self, name: str) -> Relation:
        return self.relations[name]

    def add(self, fact: Fact) -> None:
        rel = self.relations.get(fact.relation)
        if rel is None:
            raise DatalogError(f"unknown relation {fact.relation}")
        if len(fact.values) != rel.arity:
            raise DatalogError(f"{fact} has arity {len(fact.values)}, expected {rel.arity}")
        rel.counts(fact.values)[0] = 1

    def __contains__(self, fact: Fact) -> bool:
        rel = self.relations.get(fact.relation)
        return rel is not None and rel.present(fact.values)

    def annotation(self, fact: Fact) -> TupleAnnotation:
        rel = self.relations.get(fact.relation)
        counts = rel.rows.get(fact.values) if rel is not None else None
        if not counts:
            raise TupleAbsent(fact)
        return TupleAnnotation(sum(counts.values()), min(counts), tuple(sorted(counts.items())))

    def facts(self, relation: str | None = None) -> list[Fact]:
        names = [relation] if relation is not None else sorted(self.relations)
        out = [Fact(n, v) for n in names for v in self.relations[n]]
        out.sort()
        return out

    def __len__(self) -> int:
        return sum(len(r) for r in self.relations.values())

    def copy(self) -> "FactStore":
        other = FactStore()
        other.relations = {n: r.copy() for n, r in self.relations.items()}
        return other

    def annotations(self) -> dict[Fact, tuple]:
        """Every present tuple with its sorted ``(iteration, count)`` pairs."""
        return {
            Fact(n, v): tuple(sorted(c.items()))
            for n, r in self.relations.items()
            for v, c in r.rows.items()
            if c
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, FactStore) and self.annotations() == other.annotations()

    __hash__ = None


@dataclass(frozen=True)
class Diff:
    """Signed EDB change: tuples to insert and tuples to delete."""

    insertions: frozenset = frozenset()
    deletions: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "insertions", frozenset(self.insertions))
        object.__setattr__(self, "deletions", frozenset(self.deletions))
        both = self.insertions & self.deletions
        if both:
            raise DiffConflict(f"{min(both)} is both inserted and deleted")

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[str, Fact]]) -> "Diff":
        ins, dels = set(), set()
        for sign, fact in entries:
            (ins if sign == "+" else dels).add(fact)
        return cls(ins, dels)

    def entries(self) -> list[tuple[str, Fact]]:
        """Signed entries in the global tuple order."""
        out = [("+", f) for f in self.insertions] + [("-", f) for f in self.deletions]
        out.sort(key=lambda e: (e[1].sort_key(), e[0]))
        return out

    def tuples(self) -> frozenset:
        return self.insertions | self.deletions

    def __len__(self) -> int:
        return len(self.insertions) + len(self.deletions)

    def __bool__(self) -> bool:
        return bool(self.insertions or self.deletions)

    def __str__(self) -> str:
        return "\n".join(f"{s}{f}" for s, f in self.entries())


def reverse(d: Diff) -> Diff:
    return Diff(d.deletions, d.insertions)


def restrict(d: Diff, keep: Iterable[Fact]) -> Diff:
    keep = set(keep)
    return Diff(d.insertions & keep, d.deletions & keep)


def subtract(d: Diff, remove: Diff) -> Diff:
    return Diff(d.insertions - remove.insertions, d.deletions - remove.deletions)


@dataclass(frozen=True)
class DeltaIDB:
    inserted: frozenset = frozenset()
    deleted: frozenset = frozenset()

    def __bool__(self) -> bool:
        return bool(self.inserted or self.deleted)


# ---------------------------------------------------------------------------
# rule compilation and join execution

_SCAN, _TEST, _NEQ = 0, 1, 2


def _spec(term, varindex):
    if isinstance(term, Var):
        return (True, varindex[term])
    return (False, term)


def _tuple_builder(specs, nested: bool = False):
    """Compile ``env -> tuple`` for argument specs; the hot path of every join."""
    consts: list = []

    def item(isvar, x):
        if isvar:
            return f"env[{x}]"
        consts.append(x)
        return f"c[{len(consts) - 1}]"

    def tup(spec):
        parts = [item(isvar, x) for isvar, x in spec]
        return "(" + "".join(p + ", " for p in parts) + ")"

    expr = "(" + "".join(tup(sp) + ", " for sp in specs) + ")" if nested else tup(specs[0])
    return eval(f"lambda env: {expr}", {"c": tuple(consts)})


class CompiledRule:
    """A rule with variables numbered and join plans cached per anchor."""

    def __init__(self, rule: Rule):
        self.rule = rule
        self.id = rule.id
        varindex: dict[Var, int] = {}
        for atom in (rule.head, *rule.body):
            for a in atom.args:
                if isinstance(a, Var) and a not in varindex:
                    varindex[a] = len(varindex)
        self.nvars = len(varindex)
        self.head_relation = rule.head.relation
        self.head_spec = tuple(_spec(a, varindex) for a in rule.head.args)
        self.atoms: list[Atom] = list(rule.body)
        self.specs = [tuple(_spec(a, varindex) for a in atom.args) for atom in rule.body]
        self.neqs = [(_spec(c.left, varindex), _spec(c.right, varindex)) for c in rule.constraints]
        self._plans: dict = {}
        self._head_of = _tuple_builder([self.head_spec])
        self._body_of = _tuple_builder(self.specs, nested=True)

    def plan(self, first: int | None = None, head_bound: bool = False) -> list:
        key = (first, head_bound)
        plan = self._plans.get(key)
        if plan is None:
            plan = self._plans[key] = self._make_plan(first, head_bound)
        return plan

    def _make_plan(self, first, head_bound):
        bound: set[int] = set()
        if head_bound:
            bound.update(x for isvar, x in self.head_spec if isvar)
        if first is not None:
            bound.update(x for isvar, x in self.specs[first] if isvar)
        steps = []
        pending_tests = [p for p, a in enumerate(self.atoms) if a.negated and p != first]
        pending_neqs = list(range(len(self.neqs)))

        def flush():
            for p in list(pending_tests):
                if all(x in bound for isvar, x in self.specs[p] if isvar):
                    steps.append((_TEST, p, self.specs[p]))
                    pending_tests.remove(p)
            for n in list(pending_neqs):
                l, r = self.neqs[n]
                if all(x in bound for isvar, x in (l, r) if isvar):
                    steps.append((_NEQ, l, r))
                    pending_neqs.remove(n)

        flush()
        for p, atom in enumerate(self.atoms):
            if atom.negated or p == first:
                continue
            spec = self.specs[p]
            if all(x in bound for isvar, x in spec if isvar):
                steps.append((_TEST, p, spec))
            else:
                cols, keyspec, binds, eqs = [], [], [], []
                seen: dict[int, int] = {}
                for col, (isvar, x) in enumerate(spec):
                    if not isvar or x in bound:
                        cols.append(col)
                        keyspec.append((isvar, x))
                    elif x in seen:
                        eqs.append((col, seen[x]))
                    else:
                        seen[x] = col
                        binds.append((col, x))
                bound.update(seen)
                steps.append((_SCAN, p, atom.relation, tuple(cols), tuple(keyspec), tuple(binds), tuple(eqs)))
            flush()
        assert not pending_tests and not pending_neqs, "unsafe rule reached the planner"
        return steps

    def unify(self, spec, values, env) -> bool:
        for (isvar, x), v in zip(spec, values):
            if isvar:
                cur = env[x]
                if cur is _UNBOUND:
                    env[x] = v
                elif cur != v:
                    return False
            elif x != v:
                return False
        return True

    def instances(
        self,
        rels: dict[str, Relation],
        checks,
        *,
        anchor: tuple[int, tuple] | None = None,
        head: tuple | None = None,
        heads_only: bool = False,
    ) -> Iterator:
        """Yield ``(head_values, body_values)`` for every satisfying instance.

        ``checks[p](values)`` decides whether a ground tuple is acceptable at
        body position ``p`` (for negated atoms: whether it is absent).  The
        anchored position is bound to the given values without a check.
        With ``heads_only`` just the head values are yielded.
        """
        env = [_UNBOUND] * self.nvars
        if head is not None and not self.unify(self.head_spec, head, env):
            return
        first = None
        if anchor is not None:
            first, values = anchor
            if not self.unify(self.specs[first], values, env):
                return
        steps = self.plan(first, head is not None)
        yield from self._run(steps, env, rels, checks, self._head_of if heads_only else self._emit)

    def _emit(self, env):
        return self._head_of(env), self._body_of(env)

    def _run(self, steps, env, rels, checks, emit):
        # Depth-first over the plan with one generator per step; each
        # generator binds variables in ``env`` and yields once per match.
        n = len(steps)
        if n == 0:
            yield emit(env)
            return
        stack = [self._step(steps[0], env, rels, checks)]
        while stack:
            if next(stack[-1], _DONE) is _DONE:
                stack.pop()
            elif len(stack) == n:
                yield emit(env)
            else:
                stack.append(self._step(steps[len(stack)], env, rels, checks))

    @staticmethod
    def _step(step, env, rels, checks):
        kind = step[0]
        if kind == _SCAN:
            _, pos, relname, cols, keyspec, binds, eqs = step
            key = tuple(env[x] if isvar else x for isvar, x in keyspec)
            check = checks[pos]
            for values in rels[relname].lookup(cols, key):
                if eqs and any(values[c] != values[c0] for c, c0 in eqs):
                    continue
                if not check(values):
                    continue
                for col, x in binds:
                    env[x] = values[col]
                yield True
            for _col, x in binds:
                env[x] = _UNBOUND
        elif kind == _TEST:
            _, pos, spec = step
            if checks[pos](tuple(env[x] if isvar else x for isvar, x in spec)):
                yield True
        else:
            _, (lv, l), (rv, r) = step
            if (env[l] if lv else l) != (env[r] if rv else r):
                yield True


_DONE = object()


class _Unbound:
    __slots__ = ()

    def __repr__(self):
        return "<unbound>"


_UNBOUND = _Unbound()


# ---------------------------------------------------------------------------
# engine state


@dataclass
class EngineState:
    program: Program
    edb: FactStore
    idb: FactStore
    epoch: int = 0
    last_diff: Diff = field(default_factory=Diff)
    last_delta: DeltaIDB = field(default_factory=DeltaIDB)

    def __post_init__(self):
        self._compiled = [CompiledRule(r) for r in self.program.rules]
        self._rels = {**self.edb.relations, **self.idb.relations}
        self._stratum = {}
        for i, members in enumerate(self.program.strata):
            for r in members:
                self._stratum[r] = i

    # -- read-only queries -------------------------------------------------

    @property
    def compiled(self) -> list[CompiledRule]:
        return self._compiled

    def relation(self, name: str) -> Relation:
        return self._rels[name]

    @property
    def relations(self) -> dict[str, Relation]:
        return self._rels

    def stratum(self, relation: str) -> int:
        """Stratum index of an IDB relation, -1 for EDB relations."""
        return self._stratum.get(relation, -1)

    def __contains__(self, fact: Fact) -> bool:
        rel = self._rels.get(fact.relation)
        return rel is not None and rel.present(fact.values)

    def annotation(self, fact: Fact) -> TupleAnnotation:
        store = self.edb if self.program.is_edb(fact.relation) else self.idb
        return store.annotation(fact)

    def iteration(self, fact: Fact) -> int:
        return self.annotation(fact).iteration

    def facts(self, relation: str | None = None) -> list[Fact]:
        if relation is None:
            return sorted(self.edb.facts() + self.idb.facts())
        store = self.edb if self.program.is_edb(relation) else self.idb
        return store.facts(relation)

    def idb_facts(self) -> frozenset:
        return frozenset(self.idb.facts())

    def copy(self) -> "EngineState":
        return EngineState(
            self.program, self.edb.copy(), self.idb.copy(), self.epoch, self.last_diff, self.last_delta
        )

    def rules_for(self, relation: str) -> list[CompiledRule]:
        return [cr for cr in self._compiled if cr.head_relation == relation]

    # -- updates -----------------------------------------------------------

    def check_diff(self, d: Diff) -> None:
        for f in d.insertions | d.deletions:
            check_fact(self.program, f)
            if not self.program.is_edb(f.relation):
                raise DiffConflict(f"{f} is not an EDB tuple", f)
        for f in sorted(d.deletions):
            if f not in self:
                raise DiffConflict(f"cannot delete absent tuple {f}", f)
        for f in sorted(d.insertions):
            if f in self:
                raise DiffConflict(f"cannot insert present tuple {f}", f)

    def apply(self, d: Diff) -> DeltaIDB:
        """Apply ``d`` in place and return the net IDB change."""
        self.check_diff(d)
        delta = _IncrementalUpdate(self, d).run()
        self.epoch += 1
        self.last_diff = d
        self.last_delta = delta
        return delta


def evaluate(program: Program, edb: FactStore | Iterable[Fact]) -> EngineState:
    """Compute the least model of ``program`` over ``edb`` stratum by stratum."""
    if not program.strata and program.rules:
        raise DatalogError("program must be validated with check_program before evaluation")
    if not isinstance(edb, FactStore):
        edb = FactStore.from_facts(program, edb)
    else:
        edb = edb.copy()
        for name, info in program.relations.items():
            if info.kind == EDB and name not in edb.relations:
                edb.relations[name] = Relation(name, info.arity)
    state = EngineState(program, edb, FactStore.for_program(program, "idb"))
    rels = state.relations
    for members in program.strata:
        _evaluate_stratum(state, set(members), rels)
    return state


def _evaluate_stratum(state: EngineState, members: set[str], rels: dict[str, Relation]) -> None:
    rules = [cr for cr in state.compiled if cr.head_relation in members]
    level: dict[str, dict[tuple, int]] = {name: {} for name in members}

    def present(name):
        if name in members:
            return level[name].__contains__
        return rels[name].present

    def absent(name):
        rel = rels[name]
        return lambda v: not rel.present(v)

    plain_checks = {
        cr.id: [absent(a.relation) if a.negated else present(a.relation) for a in cr.atoms] for cr in rules
    }

    def add_level(found, k):
        for name, values in found:
            level[name][values] = k
            rels[name].counts(values)

    found = set()
    for cr in rules:
        seen = level[cr.head_relation]
        for head in cr.instances(rels, plain_checks[cr.id], heads_only=True):
            if head not in seen:
                found.add((cr.head_relation, head))
    add_level(found, 1)
    frontier, k = found, 1
    while frontier:
        k += 1
        by_rel = defaultdict(list)
        for name, values in frontier:
            by_rel[name].append(values)
        found = set()
        for cr in rules:
            checks = plain_checks[cr.id]
            seen = level[cr.head_relation]
            for pos, atom in enumerate(cr.atoms):
                if atom.negated or atom.relation not in members:
                    continue
                for values in by_rel.get(atom.relation, ()):
                    for head in cr.instances(rels, checks, anchor=(pos, values), heads_only=True):
                        if head not in seen:
                            found.add((cr.head_relation, head))
        add_level(found, k)
        frontier = found

    # counts: every instance over the final model, bucketed by its height
    for cr in rules:
        in_stratum = [
            level[a.relation] if not a.negated and a.relation in members else None for a in cr.atoms
        ]
        head_rel = rels[cr.head_relation]
        for head, body in cr.instances(rels, plain_checks[cr.id]):
            top = 0
            for lv_of, values in zip(in_stratum, body):
                if lv_of is not None:
                    lv = lv_of[values]
                    if lv > top:
                        top = lv
            counts = head_rel.counts(head)
            counts[top + 1] = counts.get(top + 1, 0) + 1


class _IncrementalUpdate:
    def __init__(self, state: EngineState, d: Diff):
        self.state = state
        self.diff = d
        self.rels = state.relations
        # presence in the old world, for tuples whose presence changed
        self.old_present: dict[tuple[str, tuple], bool] = {}
        self.changed: dict[str, list[tuple]] = defaultdict(list)
        self.inserted: set[Fact] = set()
        self.deleted: set[Fact] = set()

    def run(self) -> DeltaIDB:
        for f in self.diff.deletions:
            self.rels[f.relation].rows[f.values] = {}
            self.old_present[(f.relation, f.values)] = True
            self.changed[f.relation].append(f.values)
        for f in self.diff.insertions:
            self.rels[f.relation].counts(f.values)[0] = 1
            self.old_present[(f.relation, f.values)] = False
            self.changed[f.relation].append(f.values)
        for members in self.state.program.strata:
            self._stratum(set(members))
        for (name, values), _was in self.old_present.items():
            rel = self.rels[name]
            if not rel.rows.get(values):
                rel.discard(values)
        return DeltaIDB(frozenset(self.inserted), frozenset(self.deleted))

    def _present_old(self, name: str, values: tuple) -> bool:
        was = self.old_present.get((name, values))
        if was is None:
            return self.rels[name].present(values)
        return was

    def _stratum(self, members: set[str]) -> None:
        rules = [cr for cr in self.state.compiled if cr.head_relation in members]
        if not any(a.relation in self.changed for cr in rules for a in cr.atoms):
            return
        rels = self.rels
        touched: dict[tuple[str, tuple], dict[int, int]] = {}

        hist_old = Counter()
        for name in members:
            for counts in rels[name].rows.values():
                if counts:
                    hist_old[min(counts)] += 1

        def level_new(name, values):
            counts = rels[name].rows.get(values)
            return min(counts) if counts else NO_LEVEL

        def level_old(name, values):
            key = (name, values)
            if key in touched:
                counts = touched[key]
                return min(counts) if counts else NO_LEVEL
            return level_new(name, values)

        def check(atom: Atom, new_world: bool, stage: int) -> Callable[[tuple], bool]:
            name = atom.relation
            if name in members:
                level = level_new if new_world else level_old
                return lambda v: level(name, v) <= stage
            rel = rels[name]
            if new_world:
                present = rel.present
            else:
                present = lambda v: self._present_old(name, v)  # noqa: E731
            if atom.negated:
                return lambda v: not present(v)
            return present

        base_changes = {
            name: [(v, 1 if rels[name].present(v) else -1) for v in vals] for name, vals in self.changed.items()
        }
        prev_dm: dict[tuple, int] = {}
        k = 1
        while True:
            stage = k - 1
            moved = defaultdict(list)
            for (name, values) in touched:
                a = level_new(name, values) <= stage
                b = level_old(name, values) <= stage
                if a != b:
                    moved[name].append((values, 1 if a else -1))
            dm: dict[tuple, int] = defaultdict(int)
            for cr in rules:
                new_checks = [check(a, True, stage) for a in cr.atoms]
                old_checks = [check(a, False, stage) for a in cr.atoms]
                for j, atom in enumerate(cr.atoms):
                    source = moved if atom.relation in members else base_changes
                    anchors = source.get(atom.relation)
                    if not anchors:
                        continue
                    checks = new_checks[:j] + [None] + old_checks[j + 1:]
                    for values, delta in anchors:
                        sign = -delta if atom.negated else delta
                        for head in cr.instances(rels, checks, anchor=(j, values), heads_only=True):
                            dm[(cr.head_relation, head)] += sign
            changes = {}
            for key in set(dm) | set(prev_dm):
                dc = dm.get(key, 0) - prev_dm.get(key, 0)
                if dc:
                    changes[key] = dc
            for key in sorted(changes, key=lambda kv: (kv[0], repr(kv[1]))):
                name, values = key
                counts = rels[name].counts(values)
                if key not in touched:
                    touched[key] = dict(counts)
                value = counts.get(k, 0) + changes[key]
                if value < 0:
                    raise AssertionError(f"negative count for {Fact(name, values)} at iteration {k}")
                if value:
                    counts[k] = value
                else:
                    counts.pop(k, None)
            prev_dm = dict(dm)
            new_at_k = hist_old[k]
            for (name, values) in touched:
                new_at_k += (level_new(name, values) == k) - (level_old(name, values) == k)
            if hist_old[k] == 0 and new_at_k == 0:
                break
            k += 1

        for key, old_counts in touched.items():
            name, values = key
            now = bool(rels[name].rows.get(values))
            was = bool(old_counts)
            if now != was:
                self.old_present[key] = was
                self.changed[name].append(values)
                (self.inserted if now else self.deleted).add(Fact(name, values))


def apply_diff(s: EngineState, d: Diff, *, inplace: bool = False) -> tuple[EngineState, DeltaIDB]:
    """Apply ``d`` to ``s`` (or to a copy of it) and return the state with the net IDB change."""
    target = s if inplace else s.copy()
    delta = target.apply(d)
    return target, delta


def snapshot_edb(s: EngineState) -> FactStore:
    return s.edb.copy()
