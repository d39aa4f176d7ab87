"""A small exact 0/1 solver for unit-coefficient maximisation problems.

Depth-first branch and bound: variables are branched in the given order
(value 1 first), bounds propagate through every constraint after each
assignment, and a node is cut when even setting all open objective
variables to 1 could not beat the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import NodeBudgetExceeded
from .frontend import Fact
from .provenance import Derivation, ProofTree

DEFAULT_NODE_BUDGET = 10**7

LE, EQ, GE = "<=", "=", ">="


@dataclass(frozen=True)
class Constraint:
    terms: tuple  # of (variable, coefficient) with coefficient in {-1, +1}
    sense: str
    bound: int

    def activity(self, assignment: Mapping) -> int:
        return sum(c * assignment[v] for v, c in self.terms)

    def satisfied(self, assignment: Mapping) -> bool:
        a = self.activity(assignment)
        if self.sense == LE:
            return a <= self.bound
        if self.sense == GE:
            return a >= self.bound
        return a == self.bound


@dataclass(frozen=True)
class IlpInstance:
    variables: tuple
    constraints: tuple
    objective: tuple

    def __post_init__(self):
        known = set(self.variables)
        if len(known) != len(self.variables):
            raise ValueError("duplicate variable")
        for c in self.constraints:
            if c.sense not in (LE, EQ, GE):
                raise ValueError(f"bad sense {c.sense!r}")
            for v, coef in c.terms:
                if v not in known:
                    raise ValueError(f"constraint mentions unknown variable {v!r}")
                if coef not in (-1, 0, 1):
                    raise ValueError("coefficients must be -1, 0 or +1")
        if not set(self.objective) <= known:
            raise ValueError("objective mentions unknown variable")

    def value(self, assignment: Mapping) -> int:
        return sum(assignment[v] for v in self.objective)

    def feasible(self, assignment: Mapping) -> bool:
        return all(c.satisfied(assignment) for c in self.constraints)


@dataclass(frozen=True)
class IlpSolution:
    feasible: bool
    assignment: dict = field(default_factory=dict)
    objective_value: int | None = None
    nodes_explored: int = 0


def solve(inst: IlpInstance, node_budget: int = DEFAULT_NODE_BUDGET) -> IlpSolution:
    n = len(inst.variables)
    index = {v: i for i, v in enumerate(inst.variables)}
    rows: list[tuple[list[int], list[int], int]] = []
    for c in inst.constraints:
        merged: dict[int, int] = {}
        for v, coef in c.terms:
            merged[index[v]] = merged.get(index[v], 0) + coef
        idxs = [i for i in sorted(merged) if merged[i]]
        coefs = [merged[i] for i in idxs]
        if c.sense in (LE, EQ):
            rows.append((idxs, coefs, c.bound))
        if c.sense in (GE, EQ):
            rows.append((idxs, [-x for x in coefs], -c.bound))
    watch: list[list[int]] = [[] for _ in range(n)]
    for r, (idxs, _coefs, _b) in enumerate(rows):
        for i in idxs:
            watch[i].append(r)
    in_obj = [False] * n
    for v in inst.objective:
        in_obj[index[v]] = True
    n_obj = sum(in_obj)

    val = [-1] * n
    trail: list[int] = []
    zeros_obj = 0

    def assign(i, v):
        nonlocal zeros_obj
        val[i] = v
        trail.append(i)
        if v == 0 and in_obj[i]:
            zeros_obj += 1

    def undo(mark):
        nonlocal zeros_obj
        while len(trail) > mark:
            i = trail.pop()
            if val[i] == 0 and in_obj[i]:
                zeros_obj -= 1
            val[i] = -1

    def propagate(pending: list[int]) -> bool:
        queued = set(pending)
        while pending:
            r = pending.pop()
            queued.discard(r)
            idxs, coefs, bound = rows[r]
            minact = 0
            for j, c in zip(idxs, coefs):
                x = val[j]
                if x < 0:
                    if c < 0:
                        minact += c
                elif x:
                    minact += c
            if minact > bound:
                return False
            slack = bound - minact
            for j, c in zip(idxs, coefs):
                if val[j] < 0 and abs(c) > slack:
                    assign(j, 0 if c > 0 else 1)
                    for r2 in watch[j]:
                        if r2 not in queued:
                            queued.add(r2)
                            pending.append(r2)
        return True

    nodes = 0
    if not propagate(list(range(len(rows)))):
        return IlpSolution(False, nodes_explored=0)

    best: list[int] | None = None
    best_value = -1
    stack: list[list] = []
    cursor = 0
    while True:
        nodes += 1
        if nodes > node_budget:
            raise NodeBudgetExceeded(node_budget)
        if n_obj - zeros_obj > best_value:
            while cursor < n and val[cursor] >= 0:
                cursor += 1
            if cursor == n:
                best = list(val)
                best_value = n_obj - zeros_obj
            else:
                stack.append([len(trail), cursor, [1, 0]])
        # advance to the next open branch
        descended = False
        while stack:
            mark, i, values = stack[-1]
            undo(mark)
            cursor = i
            if not values:
                stack.pop()
                continue
            v = values.pop(0)
            assign(i, v)
            if propagate(list(watch[i])):
                descended = True
                break
        if not descended:
            break

    if best is None:
        return IlpSolution(False, nodes_explored=nodes)
    assignment = {v: best[i] for i, v in enumerate(inst.variables)}
    return IlpSolution(True, assignment, best_value, nodes)


def brute_force(inst: IlpInstance) -> int | None:
    """Best objective by exhaustive enumeration; for cross-checking tiny instances."""
    import itertools

    best = None
    for bits in itertools.product((0, 1), repeat=len(inst.variables)):
        a = dict(zip(inst.variables, bits))
        if inst.feasible(a):
            value = inst.value(a)
            if best is None or value > best:
                best = value
    return best


# ---------------------------------------------------------------------------
# encoding proof trees


POS, NEG = "pos", "neg"


def _var_key(v) -> tuple:
    polarity, fact = v
    return fact.sort_key(), polarity


@dataclass(frozen=True)
class Encoding:
    instance: IlpInstance
    faults: frozenset
    diff_variables: frozenset

    def zeros(self, solution: IlpSolution) -> set:
        return {v for v, x in solution.assignment.items() if x == 0}


def encode(
    trees: Mapping[Fact, Iterable[ProofTree]],
    faults: Iterable[Fact],
    diff_tuples: Iterable[Fact],
    *,
    fold_boundary: bool = True,
) -> Encoding:
    """Build the removal problem for a family of proof trees.

    Variables are ``("pos", t)`` for positive tuples and ``("neg", t)`` for
    negated leaves whose absence was caused by the diff; ``x = 1`` means the
    tuple keeps its post-diff status.  Boundary leaves (and negated leaves
    the diff did not touch) cannot change, so with ``fold_boundary`` they are
    folded into the constraint bounds; otherwise they become variables fixed
    by ``x = 1`` constraints.
    """
    faults = frozenset(faults)
    derivations = []
    for fault in sorted(faults):
        for tree in trees[fault]:
            derivations.extend(tree.derivations())
    return encode_derivations(derivations, faults, diff_tuples, fold_boundary=fold_boundary)


def encode_derivations(
    derivations: Iterable[Derivation],
    faults: Iterable[Fact],
    diff_tuples: Iterable[Fact],
    *,
    fold_boundary: bool = True,
) -> Encoding:
    """Same problem as :func:`encode`, from one-step derivations directly."""
    faults = frozenset(faults)
    diff_tuples = frozenset(diff_tuples)
    variables: set = set()
    fixed: set = set()
    rows: dict[tuple, Constraint] = {}
    for der in derivations:
        head = (POS, der.head)
        variables.add(head)
        free = set()
        constants = set()
        for fact, negated, boundary in der.body:
            var = (NEG if negated else POS, fact)
            if boundary:
                constants.add(var)
            else:
                free.add(var)
        if fold_boundary:
            body = free
        else:
            body = free | constants
            fixed |= constants
        variables |= body
        terms = tuple(sorted(((v, 1) for v in body), key=lambda t: _var_key(t[0]))) + ((head, -1),)
        rows.setdefault(terms, Constraint(terms, LE, len(body) - 1))
    constraints = [rows[k] for k in sorted(rows, key=lambda k: [(_var_key(v), c) for v, c in k])]
    for v in sorted(fixed, key=_var_key):
        constraints.append(Constraint(((v, 1),), EQ, 1))
    for f in sorted(faults):
        constraints.append(Constraint((((POS, f), 1),), EQ, 0))
        variables.add((POS, f))
    order = tuple(sorted(variables, key=_var_key))
    objective = tuple(
        v for v in order if v not in fixed and (v[1] in diff_tuples or v[0] == NEG)
    )
    diff_vars = frozenset(v for v in order if v[1] in diff_tuples)
    return Encoding(IlpInstance(order, tuple(constraints), objective), faults, diff_vars)


def _lp_name(v, names: dict) -> str:
    return names.setdefault(v, f"x{len(names) + 1}")


def to_lp(inst: IlpInstance) -> str:
    """Dump ``inst`` in LP text format with a comment mapping variable names."""
    names: dict = {}
    for v in inst.variables:
        _lp_name(v, names)
    out = ["\\ variables:"]
    out += [f"\\   {names[v]} = {v[0]} {v[1]}" if isinstance(v, tuple) else f"\\   {names[v]} = {v}"
            for v in inst.variables]
    out.append("Maximize")
    obj = " + ".join(names[v] for v in inst.objective) or "0 " + (names[inst.variables[0]] if names else "")
    out.append(f" obj: {obj}")
    out.append("Subject To")
    for k, c in enumerate(inst.constraints, 1):
        expr = ""
        for v, coef in c.terms:
            sign = "+" if coef > 0 else "-"
            expr += f" {sign} {names[v]}"
        expr = expr.lstrip(" +") if expr.startswith(" +") else expr.strip()
        out.append(f" c{k}: {expr} {c.sense} {c.bound}")
    out.append("Binary")
    out.append(" " + " ".join(names[v] for v in inst.variables))
    out.append("End")
    return "\n".join(out) + "\n"
