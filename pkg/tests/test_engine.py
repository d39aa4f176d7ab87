import random

import pytest
from conftest import edges, tc_program
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import apply, naive_annotations, naive_model

from incdebug.engine import (
    DeltaIDB,
    Diff,
    FactStore,
    apply_diff,
    evaluate,
    restrict,
    reverse,
    snapshot_edb,
)
from incdebug.errors import DiffConflict, TupleAbsent
from incdebug.frontend import Fact, check_program, parse_fact, parse_program

F = parse_fact


def test_pointsto_iterations(pt_before):
    assert pt_before.iteration(F("vpt(ins,L3)")) == 1
    assert pt_before.iteration(F("vpt(userSession,L3)")) == 2
    assert pt_before.iteration(F("new(ins,L3)")) == 0


def test_pointsto_vpt_before_diff(pt_before):
    got = {str(f) for f in pt_before.facts("vpt")}
    assert got == {"vpt(admin,L1)", "vpt(sec,L2)", "vpt(ins,L3)", "vpt(userSession,L3)"}


def test_pointsto_diff_inserts(pt_before, pt_diff):
    _s, delta = apply_diff(pt_before, pt_diff)
    want = {F("vpt(upgradedSession,L3)"), F("vpt(userSession,L2)"), F("alias(userSession,sec)")}
    assert want <= delta.inserted
    assert delta.deleted == frozenset()


def test_apply_diff_copies_by_default(pt_before, pt_diff):
    before = pt_before.idb.annotations()
    s2, _ = apply_diff(pt_before, pt_diff)
    assert pt_before.idb.annotations() == before
    assert s2.epoch == pt_before.epoch + 1


def test_empty_edb():
    s = evaluate(tc_program(), [])
    assert len(s.idb) == 0


def test_transitive_closure_counts():
    s = evaluate(tc_program(), edges((1, 2), (2, 3)))
    assert set(s.idb.facts()) == {F("P(1,2)"), F("P(2,3)"), F("P(1,3)")}
    assert s.annotation(F("P(1,3)")).count == 1
    assert s.annotation(F("P(1,3)")).iteration == 2


def test_transitive_closure_delete():
    s = evaluate(tc_program(), edges((1, 2), (2, 3)))
    delta = s.apply(Diff(deletions=edges((2, 3))))
    assert delta.deleted == {F("P(2,3)"), F("P(1,3)")}
    assert delta.inserted == frozenset()


def test_empty_diff_is_identity(pt_before):
    before = pt_before.idb.annotations()
    delta = pt_before.apply(Diff())
    assert delta == DeltaIDB()
    assert pt_before.idb.annotations() == before


def test_diff_conflicts(pt_before):
    with pytest.raises(DiffConflict):
        pt_before.apply(Diff(deletions={F("load(a,b,c)")}))
    with pytest.raises(DiffConflict):
        pt_before.apply(Diff(insertions={F("new(ins,L3)")}))
    with pytest.raises(DiffConflict):
        pt_before.apply(Diff(insertions={F("vpt(a,b)")}))
    with pytest.raises(DiffConflict):
        Diff({F("new(a,b)")}, {F("new(a,b)")})


def test_annotation_of_absent_tuple(pt_before):
    with pytest.raises(TupleAbsent):
        pt_before.annotation(F("vpt(nobody,L1)"))


def test_reverse():
    a, b = F("E(1,2)"), F("E(3,4)")
    assert reverse(Diff({a}, {b})) == Diff({b}, {a})
    assert reverse(Diff()) == Diff()
    d = Diff({a}, {b})
    assert reverse(reverse(d)) == d


def test_apply_then_reverse_restores(pt_before, pt_diff):
    before = (pt_before.edb.annotations(), pt_before.idb.annotations())
    s = pt_before.copy()
    s.apply(pt_diff)
    s.apply(reverse(pt_diff))
    assert (s.edb.annotations(), s.idb.annotations()) == before


def test_restrict():
    a, b, c = F("E(1,1)"), F("E(2,2)"), F("E(3,3)")
    d = Diff({a, b}, {c})
    assert restrict(d, {a, c}) == Diff({a}, {c})
    assert restrict(d, set()) == Diff()
    assert restrict(d, d.tuples()) == d


def test_snapshot_is_deep(pt_before):
    snap = snapshot_edb(pt_before)
    pt_before.apply(Diff(insertions={F("new(x,L9)")}))
    assert F("new(x,L9)") not in snap
    assert isinstance(snap, FactStore)


def test_index_consistency_after_updates():
    p = tc_program()
    s = evaluate(p, edges((1, 2), (2, 3), (3, 4)))
    rel = s.relation("P")
    rel.lookup((0,), (1,))
    s.apply(Diff(edges((4, 5)), edges((2, 3))))
    for key_values in list(rel.rows):
        assert key_values in rel.lookup((0,), (key_values[0],))
    indexed = {v for bucket in rel._indices[(0,)].values() for v in bucket}
    assert indexed == set(rel.rows)


def test_disequality_and_constants():
    p = check_program(parse_program("Q(X) :- E(X, Y), E(Y, Z), X != Z.\nR(X) :- E(X, b)."))
    s = evaluate(p, [F("E(a,b)"), F("E(b,a)"), F("E(b,c)")])
    assert {str(f) for f in s.idb.facts()} == {"Q(a)", "R(a)"}


def test_repeated_variable_in_atom():
    p = check_program(parse_program("L(X) :- E(X, X)."))
    s = evaluate(p, edges((1, 1), (1, 2)))
    assert set(s.idb.facts()) == {F("L(1)")}


def test_negation_across_strata():
    p = check_program(parse_program("R(X) :- E(X, Y).\nS(X) :- V(X), !R(X)."))
    s = evaluate(p, [F("V(1)"), F("V(2)"), F("E(1,5)")])
    assert set(s.facts("S")) == {F("S(2)")}
    delta = s.apply(Diff(edges((2, 6)), edges((1, 5))))
    assert delta.inserted == {F("S(1)"), F("R(2)")}
    assert delta.deleted == {F("S(2)"), F("R(1)")}
    assert s.iteration(F("S(1)")) == 1


def test_diff_order_does_not_matter():
    p = tc_program()
    base = edges((1, 2), (2, 3), (3, 4), (4, 1))
    ins = edges((1, 3), (2, 4), (5, 1))
    dels = edges((2, 3), (4, 1))
    results = set()
    for seed in range(5):
        rnd = random.Random(seed)
        i, dl = list(ins), list(dels)
        rnd.shuffle(i)
        rnd.shuffle(dl)
        s = evaluate(p, base)
        delta = s.apply(Diff(i, dl))
        results.add((delta.inserted, delta.deleted))
    assert len(results) == 1


# -- property tests ---------------------------------------------------------

PROGRAMS = [
    """
    P(X, Y) :- E(X, Y).
    P(X, Z) :- E(X, Y), P(Y, Z).
    """,
    """
    P(X, Y) :- E(X, Y).
    P(X, Z) :- P(X, Y), P(Y, Z).
    """,
    """
    R(X, Y) :- E(X, Y).
    R(X, Z) :- R(X, Y), E(Y, Z).
    N(X, Y) :- V(X), V(Y), !R(X, Y).
    Q(X) :- N(X, Y), !R(Y, X), X != Y.
    """,
    """
    A(X) :- V(X), !B(X).
    B(X) :- E(X, Y), !C(Y).
    C(X) :- E(X, X).
    C(X) :- E(X, Y), C(Y).
    D(X, Y) :- A(X), A(Y), E(X, Y).
    D(X, Z) :- D(X, Y), D(Y, Z).
    """,
    """
    S(X) :- E(X, Y), E(Y, X).
    S(X) :- E(X, 0).
    T(X, Y) :- S(X), E(X, Y), !S(Y).
    T(X, Z) :- T(X, Y), E(Y, Z), !S(Z).
    """,
]


def _base(program, nodes, rows):
    out = {F(f"E({a},{b})") for a, b in rows}
    if "V" in program.relations:
        out |= {F(f"V({i})") for i in range(nodes)}
    return out


diff_rows = st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=12)


@given(
    st.sampled_from(range(len(PROGRAMS))),
    diff_rows,
    st.lists(st.tuples(diff_rows, st.floats(0, 1)), min_size=1, max_size=4),
)
@settings(max_examples=120, deadline=None)
def test_incremental_matches_naive_oracle(which, rows, steps):
    p = check_program(parse_program(PROGRAMS[which]))
    s = evaluate(p, _base(p, 6, rows))
    for new_rows, frac in steps:
        cur = set(s.edb.facts())
        edge_facts = sorted(f for f in cur if f.relation == "E")
        dels = set(edge_facts[: int(len(edge_facts) * frac)])
        ins = {F(f"E({a},{b})") for a, b in new_rows} - cur
        s.apply(Diff(ins, dels))
        assert s.idb.annotations() == naive_annotations(p, set(s.edb.facts()))


@given(st.sampled_from(range(len(PROGRAMS))), diff_rows)
@settings(max_examples=80, deadline=None)
def test_counts_match_instance_enumeration(which, rows):
    p = check_program(parse_program(PROGRAMS[which]))
    edb = _base(p, 5, rows)
    s = evaluate(p, edb)
    assert s.idb.annotations() == naive_annotations(p, edb)
    assert set(s.idb.facts()) == naive_model(p, edb)


@given(st.sampled_from(range(len(PROGRAMS))), diff_rows, diff_rows)
@settings(max_examples=80, deadline=None)
def test_apply_reverse_round_trip(which, rows, more):
    p = check_program(parse_program(PROGRAMS[which]))
    s = evaluate(p, _base(p, 6, rows))
    before = (s.edb.annotations(), s.idb.annotations())
    cur = set(s.edb.facts())
    d = Diff({F(f"E({a},{b})") for a, b in more} - cur, set(sorted(f for f in cur if f.relation == "E")[:2]))
    s.apply(d)
    s.apply(reverse(d))
    assert (s.edb.annotations(), s.idb.annotations()) == before


@given(st.sampled_from(range(len(PROGRAMS))), diff_rows, diff_rows)
@settings(max_examples=80, deadline=None)
def test_delta_matches_two_evaluations(which, rows, more):
    p = check_program(parse_program(PROGRAMS[which]))
    e1 = _base(p, 6, rows)
    s = evaluate(p, e1)
    cur = set(s.edb.facts())
    d = Diff({F(f"E({a},{b})") for a, b in more} - cur, set(sorted(f for f in cur if f.relation == "E")[::2]))
    delta = s.apply(d)
    m1, m2 = naive_model(p, e1), naive_model(p, apply(e1, d))
    assert delta.inserted == m2 - m1
    assert delta.deleted == m1 - m2


@given(st.sampled_from(range(len(PROGRAMS))), diff_rows)
@settings(max_examples=60, deadline=None)
def test_iteration_is_max_body_plus_one(which, rows):
    """The iteration of each tuple is realised by some instance one level up."""
    p = check_program(parse_program(PROGRAMS[which]))
    s = evaluate(p, _base(p, 5, rows))
    for f in s.idb.facts():
        k = s.iteration(f)
        stratum = p.stratum_of(f.relation)
        best = None
        for cr in s.rules_for(f.relation):
            checks = [
                (lambda v, r=s.relation(a.relation): not r.present(v)) if a.negated else s.relation(a.relation).present
                for a in cr.atoms
            ]
            for _h, body in cr.instances(s.relations, checks, head=f.values):
                top = 0
                for a, v in zip(cr.atoms, body):
                    if not a.negated and not p.is_edb(a.relation) and p.stratum_of(a.relation) == stratum:
                        top = max(top, s.iteration(Fact(a.relation, v)))
                best = top + 1 if best is None else min(best, top + 1)
        assert best == k


def test_seeded_transitive_closure_sequences():
    """A denser, fixed-seed version of the acceptance sweep."""
    p = tc_program()
    rnd = random.Random(7)
    for _trial in range(10):
        n = rnd.randint(5, 15)
        pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
        s = evaluate(p, [F(f"E({a},{b})") for a, b in rnd.sample(pairs, min(len(pairs), 3 * n))])
        for _step in range(3):
            cur = sorted(s.edb.facts())
            dels = set(rnd.sample(cur, min(10, len(cur))))
            fresh = [F(f"E({a},{b})") for a, b in pairs if F(f"E({a},{b})") not in set(cur)]
            ins = set(rnd.sample(fresh, min(10, len(fresh))))
            s.apply(Diff(ins, dels))
            ref = evaluate(p, s.edb)
            assert s.idb == ref.idb
