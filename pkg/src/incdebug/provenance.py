"""Proof trees rebuilt from iteration annotations.

A tree is never stored during evaluation.  To explain ``t`` at iteration
``k`` we look for a rule instance deriving ``t`` whose same-stratum body
tuples all sit below ``k``; such an instance exists by construction, and
recursing on its body yields a tree of height ``k`` within the stratum.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator

from .engine import DeltaIDB, Diff, EngineState
from .errors import EnumerationBudgetExceeded, NotInDelta, TupleAbsent
from .frontend import Fact

DEFAULT_TREE_LIMIT = 10_000


@dataclass(frozen=True)
class ProofNode:
    fact: Fact
    negated: bool = False
    rule: int | None = None
    children: tuple = ()
    boundary: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    def height(self) -> int:
        if not self.children:
            return 0
        return 1 + max(c.height() for c in self.children)

    def walk(self, depth: int = 0) -> Iterator[tuple[int, "ProofNode"]]:
        yield depth, self
        for c in self.children:
            yield from c.walk(depth + 1)


@dataclass(frozen=True)
class Derivation:
    """One ground rule instance as it appears inside a proof tree."""

    head: Fact
    rule: int
    body: tuple  # of (Fact, negated, boundary)


@dataclass(frozen=True)
class ProofTree:
    root: ProofNode
    height: int

    @classmethod
    def of(cls, root: ProofNode) -> "ProofTree":
        return cls(root, root.height())

    def nodes(self) -> Iterator[ProofNode]:
        return (n for _d, n in self.root.walk())

    def tuples(self) -> set[Fact]:
        """Positive tuples of the tree, boundary leaves included."""
        return {n.fact for n in self.nodes() if not n.negated}

    def expanded(self) -> set[Fact]:
        """Positive tuples that are not boundary leaves."""
        return {n.fact for n in self.nodes() if not n.negated and not n.boundary}

    def boundary(self) -> set[Fact]:
        return {n.fact for n in self.nodes() if n.boundary and not n.negated}

    def negated_leaves(self) -> set[tuple[Fact, bool]]:
        """``(fact, changed)`` for each negated leaf; ``changed`` means its absence is new."""
        return {(n.fact, not n.boundary) for n in self.nodes() if n.negated}

    def derivations(self) -> list[Derivation]:
        out = []
        for n in self.nodes():
            if n.rule is not None:
                body = tuple((c.fact, c.negated, c.boundary) for c in n.children)
                out.append(Derivation(n.fact, n.rule, body))
        return out


def _body_key(rule_id: int, atoms, body) -> tuple:
    return tuple((a.negated, Fact(a.relation, v).sort_key()) for a, v in zip(atoms, body)), rule_id


def _instances_for(s: EngineState, fact: Fact, below: int | None):
    """Rule instances deriving ``fact`` in the current state.

    With ``below`` set, same-stratum positive body tuples must have an
    iteration strictly smaller than it.  Results are sorted by body, then rule.
    """
    rels = s.relations
    stratum = s.stratum(fact.relation)
    found = []
    for cr in s.rules_for(fact.relation):
        checks = []
        for atom in cr.atoms:
            rel = rels[atom.relation]
            if atom.negated:
                checks.append(lambda v, rel=rel: not rel.present(v))
            elif below is not None and s.stratum(atom.relation) == stratum:
                checks.append(lambda v, rel=rel: rel.level(v) < below)
            else:
                checks.append(rel.present)
        for _head, body in cr.instances(rels, checks, head=fact.values):
            found.append((_body_key(cr.id, cr.atoms, body), cr, body))
    found.sort(key=lambda x: x[0])
    return [(cr, body) for _k, cr, body in found]


def min_proof_tree(s: EngineState, t: Fact) -> ProofTree:
    if t not in s:
        raise TupleAbsent(t)
    memo: dict[Fact, ProofNode] = {}
    return ProofTree.of(_min_node(s, t, memo, None))


def _min_node(s: EngineState, t: Fact, memo, affected) -> ProofNode:
    node = memo.get(t)
    if node is not None:
        return node
    if affected is not None and t not in affected:
        node = ProofNode(t, boundary=True)
    elif s.program.is_edb(t.relation):
        node = ProofNode(t)
    else:
        level = s.relation(t.relation).level(t.values)
        cr, body = _instances_for(s, t, level)[0]
        children = []
        for atom, values in zip(cr.atoms, body):
            f = Fact(atom.relation, values)
            if atom.negated:
                changed = affected is not None and f in affected.negated
                children.append(ProofNode(f, negated=True, boundary=not changed))
            else:
                children.append(_min_node(s, f, memo, affected))
        node = ProofNode(t, rule=cr.id, children=tuple(children))
    memo[t] = node
    return node


class AffectedSet:
    """Tuples touched by a diff: new positive tuples and newly absent ones."""

    def __init__(self, d: Diff, delta: DeltaIDB):
        self.positive = frozenset(delta.inserted | d.insertions)
        self.negated = frozenset(delta.deleted | d.deletions)

    def __contains__(self, fact: Fact) -> bool:
        return fact in self.positive


def _affected(s2: EngineState, d: Diff, delta: DeltaIDB | None) -> AffectedSet:
    if delta is None:
        if s2.last_diff != d:
            raise ValueError("pass delta explicitly when d is not the last applied diff")
        delta = s2.last_delta
    return AffectedSet(d, delta)


def incremental_provenance(
    s2: EngineState, t: Fact, d: Diff, delta: DeltaIDB | None = None
) -> tuple[ProofTree, set[Fact]]:
    """Minimal-height tree of ``t`` with unaffected subtrees cut to boundary leaves."""
    if t not in s2:
        raise TupleAbsent(t)
    affected = _affected(s2, d, delta)
    if t not in affected:
        raise NotInDelta(t)
    tree = ProofTree.of(_min_node(s2, t, {}, affected))
    return tree, tree.expanded()


def all_proof_trees(
    s2: EngineState,
    t: Fact,
    d: Diff,
    limit: int = DEFAULT_TREE_LIMIT,
    delta: DeltaIDB | None = None,
) -> list[ProofTree]:
    """Every non-cyclic tree of ``t`` over affected tuples, in enumeration order."""
    if t not in s2:
        raise TupleAbsent(t)
    affected = _affected(s2, d, delta)
    if t not in affected:
        raise NotInDelta(t)
    roots = _TreeEnumerator(s2, affected, limit, t).nodes(t, frozenset())
    return [ProofTree.of(r) for r in roots]


def affected_derivations(
    s2: EngineState, t: Fact, d: Diff, delta: DeltaIDB | None = None
) -> list[Derivation]:
    """Every rule instance reachable from ``t`` through affected tuples.

    This is a superset of the derivations occurring in the trees returned by
    :func:`all_proof_trees`, computed without enumerating trees.  Instances
    whose body contains their own head cannot occur in a non-cyclic tree and
    are left out.
    """
    if t not in s2:
        raise TupleAbsent(t)
    affected = _affected(s2, d, delta)
    if t not in affected:
        raise NotInDelta(t)
    en = _TreeEnumerator(s2, affected, DEFAULT_TREE_LIMIT, t)
    out: list[Derivation] = []
    seen = {t}
    queue = [t] if en._expandable(t) else []
    while queue:
        f = queue.pop()
        for rule_id, body in en.bodies(f):
            if any(g == f and not negated for g, negated in body):
                continue
            parts = []
            for g, negated in body:
                if negated:
                    parts.append((g, True, g not in affected.negated))
                else:
                    parts.append((g, False, g not in affected))
                    if g not in seen and en._expandable(g):
                        seen.add(g)
                        queue.append(g)
            out.append(Derivation(f, rule_id, tuple(parts)))
    return out


class _TreeEnumerator:
    """Enumerates trees with memoisation on the ancestors that matter.

    The trees below ``f`` depend on the ancestor set only through the
    ancestors that ``f`` can reach in the affected derivation graph, so that
    intersection is the memo key.
    """

    def __init__(self, s: EngineState, affected: AffectedSet, limit: int, root: Fact):
        self.s = s
        self.affected = affected
        self.limit = limit
        self.root = root
        self._bodies: dict[Fact, list] = {}
        self._reach: dict[Fact, frozenset] = {}
        self._memo: dict[tuple, list] = {}

    def bodies(self, t: Fact) -> list:
        """``(rule id, [(fact, negated), ...])`` for each instance deriving ``t``."""
        out = self._bodies.get(t)
        if out is None:
            out = []
            rels = self.s.relations
            for cr in sorted(self.s.rules_for(t.relation), key=lambda c: c.id):
                checks = [
                    (lambda v, rel=rels[a.relation]: not rel.present(v)) if a.negated else rels[a.relation].present
                    for a in cr.atoms
                ]
                found = sorted(
                    (body for _h, body in cr.instances(rels, checks, head=t.values)),
                    key=lambda b: _body_key(cr.id, cr.atoms, b),
                )
                for body in found:
                    out.append((cr.id, [(Fact(a.relation, v), a.negated) for a, v in zip(cr.atoms, body)]))
            self._bodies[t] = out
        return out

    def _expandable(self, f: Fact) -> bool:
        return f in self.affected and not self.s.program.is_edb(f.relation)

    def reach(self, t: Fact) -> frozenset:
        """Expandable tuples reachable from ``t`` through positive body atoms."""
        got = self._reach.get(t)
        if got is None:
            seen: set[Fact] = set()
            stack = [t]
            while stack:
                f = stack.pop()
                for _rid, body in self.bodies(f):
                    for g, negated in body:
                        if not negated and g not in seen and self._expandable(g):
                            seen.add(g)
                            stack.append(g)
            got = self._reach[t] = frozenset(seen)
        return got

    def nodes(self, t: Fact, ancestors: frozenset) -> list[ProofNode]:
        if t not in self.affected:
            return [ProofNode(t, boundary=True)]
        if self.s.program.is_edb(t.relation):
            return [ProofNode(t)]
        key = (t, ancestors & self.reach(t))
        got = self._memo.get(key)
        if got is None:
            got = self._memo[key] = self._expand(t, key[1])
        return got

    def _expand(self, t: Fact, ancestors: frozenset) -> list[ProofNode]:
        inner = ancestors | {t}
        out: list[ProofNode] = []
        seen: set[ProofNode] = set()
        for rule_id, body in self.bodies(t):
            options = []
            for f, negated in body:
                if negated:
                    options.append([ProofNode(f, negated=True, boundary=f not in self.affected.negated)])
                elif f in inner:
                    options = None
                    break
                else:
                    sub = self.nodes(f, inner)
                    if not sub:
                        options = None
                        break
                    options.append(sub)
            if options is None:
                continue
            total = 1
            for o in options:
                total *= len(o)
            if total + len(out) > self.limit:
                raise EnumerationBudgetExceeded(self.limit, self.root)
            for combo in itertools.product(*options):
                node = ProofNode(t, rule=rule_id, children=tuple(combo))
                if node not in seen:
                    seen.add(node)
                    out.append(node)
        return out


def format_tree(tree: ProofTree | ProofNode, marked: Iterable[Fact] = ()) -> str:
    """Indented rendering; ``marked`` tuples get a ``(+)`` tag."""
    root = tree.root if isinstance(tree, ProofTree) else tree
    marked = set(marked)
    lines = []
    for depth, n in root.walk():
        text = ("!" if n.negated else "") + str(n.fact)
        tags = []
        if n.rule is not None:
            tags.append(f"r{n.rule}")
        if n.fact in marked and not n.negated:
            tags.append("+")
        if n.boundary:
            tags.append("unchanged")
        lines.append("  " * depth + text + (f"  [{', '.join(tags)}]" if tags else ""))
    return "\n".join(lines) + "\n"


def format_tree_records(tree: ProofTree | ProofNode) -> str:
    """One tab-separated record per node: depth, polarity, rule id, tuple, kind."""
    root = tree.root if isinstance(tree, ProofTree) else tree
    lines = []
    for depth, n in root.walk():
        kind = "rule" if n.rule is not None else ("boundary" if n.boundary else "leaf")
        rule = str(n.rule) if n.rule is not None else "-"
        lines.append(f"{depth}\t{'-' if n.negated else '+'}\t{rule}\t{n.fact}\t{kind}")
    return "\n".join(lines) + "\n"
