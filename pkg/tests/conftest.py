import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from incdebug.engine import evaluate  # noqa: E402
from incdebug.formats import read_diff, read_facts_dir, read_faults  # noqa: E402
from incdebug.frontend import check_program, load_program, parse_fact, parse_program  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
POINTSTO = FIXTURES / "pointsto"

TC_TEXT = """
P(X, Y) :- E(X, Y).
P(X, Z) :- E(X, Y), P(Y, Z).
"""


def tc_program():
    return check_program(parse_program(TC_TEXT))


def edges(*pairs):
    return [parse_fact(f"E({a},{b})") for a, b in pairs]


@pytest.fixture
def pt_program():
    return load_program(POINTSTO / "program.dl")


@pytest.fixture
def pt_edb(pt_program):
    return read_facts_dir(pt_program, POINTSTO / "facts")


@pytest.fixture
def pt_diff(pt_program):
    return read_diff(POINTSTO / "update.diff", pt_program)


@pytest.fixture
def pt_faults(pt_program):
    return read_faults(POINTSTO / "faults.txt", pt_program)


@pytest.fixture
def pt_before(pt_program, pt_edb):
    return evaluate(pt_program, pt_edb)


@pytest.fixture
def pt_after(pt_before, pt_diff):
    s = pt_before.copy()
    s.apply(pt_diff)
    return s


@pytest.fixture
def fact():
    return parse_fact


def pytest_terminal_summary(terminalreporter):
    """Repeat one pass/fail line per acceptance criterion after the run."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance.py::test_criterion_" in rep.nodeid:
                name = rep.nodeid.split("::test_criterion_")[1]
                number, _, label = name.partition("_")
                lines.append((int(number), f"criterion {number}: {outcome.upper()[:4]} {label.replace('_', ' ')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _n, line in sorted(lines):
            terminalreporter.write_line(line.replace("PASS ", "PASS  ").replace("FAIL ", "FAIL  "))
