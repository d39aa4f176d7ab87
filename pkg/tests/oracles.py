"""Slow, obviously-correct reference implementations used only by tests."""

from __future__ import annotations

import itertools
from collections import defaultdict

from incdebug.engine import Diff
from incdebug.frontend import Fact, Program, Var


def _match(atom, fact, subst):
    if atom.relation != fact.relation:
        return None
    out = dict(subst)
    for a, v in zip(atom.args, fact.values):
        if isinstance(a, Var):
            if a in out and out[a] != v:
                return None
            out[a] = v
        elif a != v:
            return None
    return out


def _ground(atom, subst):
    return Fact(atom.relation, tuple(subst[a] if isinstance(a, Var) else a for a in atom.args))


def instantiations(program: Program, rule, facts: set[Fact]):
    """All substitutions satisfying the rule body against ``facts``."""
    by_rel = defaultdict(list)
    for f in facts:
        by_rel[f.relation].append(f)
    substs = [{}]
    for atom in rule.body:
        if atom.negated:
            continue
        nxt = []
        for s in substs:
            for f in by_rel[atom.relation]:
                m = _match(atom, f, s)
                if m is not None:
                    nxt.append(m)
        substs = nxt
    out = []
    for s in substs:
        if any(_ground(a, s) in facts for a in rule.body if a.negated):
            continue
        if any(
            (s[c.left] if isinstance(c.left, Var) else c.left) == (s[c.right] if isinstance(c.right, Var) else c.right)
            for c in rule.constraints
        ):
            continue
        out.append(s)
    return out


def naive_levels(program: Program, edb) -> dict[Fact, int]:
    """Naive fixpoint per stratum; value is the round a tuple first appears (EDB: 0)."""
    level = {f: 0 for f in edb}
    for members in program.strata:
        rules = [r for r in program.rules if r.head.relation in members]
        round_no = 0
        while True:
            round_no += 1
            current = set(level)
            new = set()
            for r in rules:
                for s in instantiations(program, r, current):
                    h = _ground(r.head, s)
                    if h not in level:
                        new.add(h)
            if not new:
                break
            for h in new:
                level[h] = round_no
    return level


def naive_annotations(program: Program, edb) -> dict[Fact, tuple]:
    """IDB tuple -> sorted ((iteration, count), ...) computed from scratch."""
    level = naive_levels(program, edb)
    facts = set(level)
    counts: dict[Fact, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for r in program.rules:
        stratum = program.stratum_of(r.head.relation)
        for s in instantiations(program, r, facts):
            top = 0
            for a in r.body:
                if a.negated:
                    continue
                if not program.is_edb(a.relation) and program.stratum_of(a.relation) == stratum:
                    top = max(top, level[_ground(a, s)])
            counts[_ground(r.head, s)][top + 1] += 1
    return {f: tuple(sorted(c.items())) for f, c in counts.items()}


def naive_model(program: Program, edb) -> set[Fact]:
    return {f for f in naive_levels(program, edb) if not program.is_edb(f.relation)}


def apply(edb, d: Diff) -> set[Fact]:
    return (set(edb) - d.deletions) | d.insertions


def subsets_by_size(entries):
    for k in range(len(entries) + 1):
        yield from itertools.combinations(entries, k)


def min_rollback_size(program, e1, d: Diff, unwanted, missing=()) -> int:
    """Smallest number of diff entries whose removal clears every fault."""
    for combo in subsets_by_size(d.entries()):
        removed = Diff.from_entries(combo)
        m = naive_model(program, apply(e1, Diff(d.insertions - removed.insertions, d.deletions - removed.deletions)))
        if not (m & set(unwanted)) and set(missing) <= m:
            return len(combo)
    raise AssertionError("removing the whole diff must clear the faults")


def min_localization_size(program, e1, d: Diff, unwanted, missing=()) -> int:
    for combo in subsets_by_size(d.entries()):
        m = naive_model(program, apply(e1, Diff.from_entries(combo)))
        if set(unwanted) <= m and not (m & set(missing)):
            return len(combo)
    raise AssertionError("the whole diff reproduces the faults")


def brute_trees(program: Program, facts: set[Fact], t: Fact, expand, ancestors=frozenset()):
    """All non-cyclic derivation trees as nested tuples.

    ``expand(f)`` says whether ``f`` is explored; other tuples are leaves.
    A tree is ``(fact, rule_id, (child, ...))``; leaves are ``(fact, None, ())``
    and negated leaves ``("!", fact)``.
    """
    if not expand(t):
        return [(t, None, ())]
    out = []
    for r in program.rules:
        if r.head.relation != t.relation:
            continue
        for s in instantiations(program, r, facts):
            if _ground(r.head, s) != t:
                continue
            options = []
            ok = True
            for a in r.body:
                g = _ground(a, s)
                if a.negated:
                    options.append([("!", g)])
                elif g in ancestors or g == t:
                    ok = False
                    break
                else:
                    sub = brute_trees(program, facts, g, expand, ancestors | {t})
                    if not sub:
                        ok = False
                        break
                    options.append(sub)
            if ok:
                for combo in itertools.product(*options):
                    out.append((t, r.id, tuple(combo)))
    return sorted(set(out), key=repr)


def tree_shape(node) -> tuple:
    """Convert a ProofNode into the nested-tuple shape used by ``brute_trees``."""
    if node.negated:
        return ("!", node.fact)
    if node.rule is None:
        return (node.fact, None, ())
    return (node.fact, node.rule, tuple(tree_shape(c) for c in node.children))


def tree_height(shape) -> int:
    if shape[0] == "!" or shape[1] is None:
        return 0
    return 1 + max(tree_height(c) for c in shape[2])
