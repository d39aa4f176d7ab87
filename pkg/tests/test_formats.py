import tempfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incdebug.engine import Diff, FactStore
from incdebug.errors import DiffConflict, FaultSpecError, ParseError
from incdebug.formats import (
    csv_text,
    format_diff,
    format_faults,
    parse_diff,
    parse_faults,
    read_facts_dir,
    read_diff,
    write_diff,
    write_facts_dir,
)
from incdebug.frontend import Fact, check_program, parse_fact, parse_program

F = parse_fact


def test_fixture_facts(pt_edb):
    assert len(pt_edb) == 6
    assert F("store(admin,session,ins)") in pt_edb


def test_facts_round_trip(tmp_path, pt_program, pt_edb):
    write_facts_dir(pt_edb, tmp_path, pt_program.edb_relations())
    assert (tmp_path / "load.facts").read_text() == ""
    assert read_facts_dir(pt_program, tmp_path) == pt_edb


def test_facts_errors(tmp_path, pt_program):
    (tmp_path / "new.facts").write_text("a\tb\tc\n")
    with pytest.raises(ParseError) as info:
        read_facts_dir(pt_program, tmp_path)
    assert info.value.line == 1
    (tmp_path / "new.facts").write_text("")
    (tmp_path / "bogus.facts").write_text("x\n")
    with pytest.raises(ParseError):
        read_facts_dir(pt_program, tmp_path)
    assert len(read_facts_dir(pt_program, tmp_path, strict=False)) == 0
    with pytest.raises(FileNotFoundError):
        read_facts_dir(pt_program, tmp_path / "missing")


def test_parse_diff(pt_program):
    d = parse_diff("// comment\n+new(a,L1)\n\n-assign(userSession,ins)\n", pt_program)
    assert d == Diff({F("new(a,L1)")}, {F("assign(userSession,ins)")})


def test_diff_conflicts(pt_program):
    with pytest.raises(DiffConflict) as info:
        parse_diff("+new(a,b)\n-new(a,b)\n")
    assert info.value.line == 2
    with pytest.raises(DiffConflict):
        parse_diff("+new(a,b)\n+new(a,b)\n")
    with pytest.raises(DiffConflict):
        parse_diff("+vpt(a,b)\n", pt_program)
    with pytest.raises(DiffConflict):
        parse_diff("+new(a)\n", pt_program)
    with pytest.raises(ParseError):
        parse_diff("new(a,b)\n")


def test_diff_file_round_trip(tmp_path, pt_program, pt_diff):
    path = tmp_path / "x.diff"
    write_diff(pt_diff, path, ["size: 2"])
    assert path.read_text().splitlines()[-1] == "// size: 2"
    assert read_diff(path, pt_program) == pt_diff


def test_faults(pt_program, pt_faults):
    assert pt_faults == (frozenset({F("alias(userSession,sec)")}), frozenset())
    unwanted, missing = parse_faults("unwanted vpt(a,L1)\nmissing vpt(b,L2)\n", pt_program)
    assert format_faults(unwanted, missing) == "unwanted vpt(a,L1)\nmissing vpt(b,L2)\n"
    with pytest.raises(FaultSpecError):
        parse_faults("wanted vpt(a,L1)\n")
    with pytest.raises(FaultSpecError):
        parse_faults("unwanted new(a,L1)\n", pt_program)
    with pytest.raises(FaultSpecError):
        parse_faults("unwanted vpt(a,L1)\nmissing vpt(a,L1)\n")


def test_csv_text():
    text = csv_text(["a", "b"], [[1, "x,y"]], ["seed: 0"])
    assert text == '# seed: 0\r\na,b\r\n1,"x,y"\r\n'


values = st.one_of(st.integers(-50, 50), st.from_regex(r"[a-z][a-zA-Z0-9_]{0,5}", fullmatch=True))
facts = st.builds(lambda r, vs: Fact(r, tuple(vs)), st.sampled_from(["e", "g"]), st.lists(values, min_size=2, max_size=2))


@given(st.sets(facts, max_size=8), st.sets(facts, max_size=8))
@settings(max_examples=100, deadline=None)
def test_diff_text_round_trip(ins, dels):
    d = Diff(ins, dels - ins)
    assert parse_diff(format_diff(d)) == d


@given(st.sets(facts, max_size=10))
@settings(max_examples=50, deadline=None)
def test_facts_dir_round_trip(rows):
    program = check_program(parse_program("h(X) :- e(X, Y), g(Y, X)."))
    store = FactStore.from_facts(program, rows)
    with tempfile.TemporaryDirectory() as tmp:
        write_facts_dir(store, tmp)
        assert read_facts_dir(program, tmp) == store
