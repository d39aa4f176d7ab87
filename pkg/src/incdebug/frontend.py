"""Datalog surface syntax: parsing, validation, stratification and the
rule-switch transformation.

Variables are capitalised identifiers; lowercase identifiers, integers and
double-quoted strings are constants.  Inside ground clauses (facts, diff
lines, tuple arguments on the command line) every identifier is a constant,
so ``new(admin,L1).`` is a fact about the symbol ``L1``.
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Union

import networkx as nx

from .errors import ArityError, DatalogError, ParseError, SafetyViolation, UnstratifiableNegation

Constant = Union[str, int]

EDB = "edb"
IDB = "idb"
RULE_SWITCH = "Rule"

_INT_RE = re.compile(r"-?\d+\Z")
_BARE_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
_LOWER_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


def intern_constant(text: str) -> Constant:
    """Map a bare token to a constant: integers become ``int``, anything else an interned ``str``."""
    if _INT_RE.match(text):
        return int(text)
    return sys.intern(text)


def _value_key(v: Constant):
    return (0, v, "") if isinstance(v, int) else (1, 0, v)


def format_value(v: Constant, *, in_rule: bool = False) -> str:
    if isinstance(v, int):
        return str(v)
    pattern = _LOWER_RE if in_rule else _BARE_RE
    if pattern.match(v):
        return v
    return json.dumps(v)


@dataclass(frozen=True)
class Fact:
    """A ground tuple of a relation."""

    relation: str
    values: tuple

    def sort_key(self):
        return (self.relation, tuple(_value_key(v) for v in self.values))

    def __lt__(self, other: "Fact") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "Fact") -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: "Fact") -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: "Fact") -> bool:
        return self.sort_key() >= other.sort_key()

    def __str__(self) -> str:
        return f"{self.relation}({','.join(format_value(v) for v in self.values)})"

    def __repr__(self) -> str:
        return f"Fact({self})"


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Var, Constant]


def format_term(t: Term) -> str:
    return t.name if isinstance(t, Var) else format_value(t, in_rule=True)


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple
    negated: bool = False

    def variables(self) -> list[Var]:
        return [a for a in self.args if isinstance(a, Var)]

    def __str__(self) -> str:
        inner = ", ".join(format_term(a) for a in self.args)
        return f"{'!' if self.negated else ''}{self.relation}({inner})"


@dataclass(frozen=True)
class Neq:
    """Built-in disequality between two terms."""

    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{format_term(self.left)} != {format_term(self.right)}"


@dataclass(frozen=True)
class Rule:
    id: int
    head: Atom
    body: tuple
    constraints: tuple = ()

    def positive(self) -> list[Atom]:
        return [a for a in self.body if not a.negated]

    def __str__(self) -> str:
        parts = [str(a) for a in self.body] + [str(c) for c in self.constraints]
        return f"{self.head} :- {', '.join(parts)}."


@dataclass(frozen=True)
class RelationInfo:
    arity: int
    kind: str


@dataclass(frozen=True)
class Program:
    relations: dict = field(default_factory=dict)
    rules: tuple = ()
    facts: tuple = ()
    strata: tuple = ()

    def edb_relations(self) -> list[str]:
        return [r for r, info in self.relations.items() if info.kind == EDB]

    def idb_relations(self) -> list[str]:
        return [r for r, info in self.relations.items() if info.kind == IDB]

    def is_edb(self, relation: str) -> bool:
        return self.relations[relation].kind == EDB

    def stratum_of(self, relation: str) -> int:
        """Stratum index of an IDB relation; EDB relations report -1."""
        for i, members in enumerate(self.strata):
            if relation in members:
                return i
        return -1

    def rule(self, rule_id: int) -> Rule:
        return self.rules[rule_id - 1]

    def __str__(self) -> str:
        return format_program(self)


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<decl>\.decl\b)
  | (?P<implies>:-)
  | (?P<neq>!=)
  | (?P<bang>!)
  | (?P<int>-?\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),.=])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, source: str | None) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, source)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            value = m.group()
            if kind == "punct":
                kind = value
            toks.append(_Tok(kind, value, line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, source: str | None):
        self.source = source
        self.toks = _tokenize(text, source)
        self.i = 0

    def peek(self, offset: int = 0) -> _Tok:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def error(self, message: str, tok: _Tok | None = None, cls=ParseError):
        tok = tok or self.peek()
        return cls(message, tok.line, tok.col, self.source)

    def expect(self, kind: str, what: str | None = None) -> _Tok:
        tok = self.peek()
        if tok.kind != kind:
            shown = tok.text or "end of input"
            raise self.error(f"expected {what or kind!r}, found {shown!r}")
        self.i += 1
        return tok

    def accept(self, kind: str) -> _Tok | None:
        if self.peek().kind == kind:
            self.i += 1
            return self.toks[self.i - 1]
        return None

    def raw_term(self):
        tok = self.peek()
        if tok.kind == "int":
            self.i += 1
            return ("const", int(tok.text), tok)
        if tok.kind == "string":
            self.i += 1
            return ("const", sys.intern(json.loads(tok.text)), tok)
        if tok.kind == "ident":
            self.i += 1
            if tok.text.startswith("_"):
                raise self.error("wildcards and underscore variables are not supported", tok)
            return ("ident", tok.text, tok)
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}")

    def raw_atom(self):
        name = self.expect("ident", "relation name")
        self.expect("(", "(")
        args = [self.raw_term()]
        while self.accept(","):
            args.append(self.raw_term())
        self.expect(")", ")")
        return name, args


def _ground(raw) -> Constant:
    kind, value, _ = raw
    return sys.intern(value) if kind == "ident" else value


def _as_term(raw) -> Term:
    kind, value, _ = raw
    if kind == "ident":
        if value[0].isupper():
            return Var(value)
        return sys.intern(value)
    return value


class _ProgramBuilder:
    def __init__(self, parser: _Parser):
        self.p = parser
        self.declared: dict[str, tuple[int, str, _Tok]] = {}
        self.arity: dict[str, int] = {}
        self.order: list[str] = []
        self.heads: set[str] = set()
        self.rules: list[Rule] = []
        self.facts: list[Fact] = []
        self.atom_refs: list[tuple[str, _Tok]] = []

    def note_relation(self, name_tok: _Tok, arity: int):
        name = name_tok.text
        if name in self.arity and self.arity[name] != arity:
            raise self.p.error(
                f"relation {name} used with arity {arity}, expected {self.arity[name]}", name_tok, ArityError
            )
        if name not in self.arity:
            self.arity[name] = arity
            self.order.append(name)
        self.atom_refs.append((name, name_tok))

    def declaration(self):
        p = self.p
        p.expect("decl")
        name = p.expect("ident", "relation name")
        p.expect("(")
        fields = {}
        while True:
            key = p.expect("ident", "declaration field")
            p.expect("=")
            val = p.peek()
            if val.kind not in ("int", "ident"):
                raise p.error("expected a declaration value")
            p.i += 1
            fields[key.text] = val
            if not p.accept(","):
                break
        p.expect(")")
        if set(fields) - {"arity", "kind"} or "arity" not in fields:
            raise p.error("declaration needs arity=k and optional kind=edb|idb", name)
        if fields["arity"].kind != "int" or int(fields["arity"].text) < 1:
            raise p.error("arity must be a positive integer", fields["arity"])
        kind = fields["kind"].text if "kind" in fields else None
        if kind not in (None, EDB, IDB):
            raise p.error("kind must be edb or idb", fields["kind"])
        if name.text in self.declared:
            raise p.error(f"relation {name.text} declared twice", name)
        self.declared[name.text] = (int(fields["arity"].text), kind, name)
        self.note_relation(name, int(fields["arity"].text))
        self.atom_refs.pop()

    def clause(self):
        p = self.p
        name, raw_args = p.raw_atom()
        if p.accept("."):
            self.note_relation(name, len(raw_args))
            self.facts.append(Fact(name.text, tuple(_ground(a) for a in raw_args)))
            return
        p.expect("implies", "':-' or '.'")
        self.note_relation(name, len(raw_args))
        self.heads.add(name.text)
        head = Atom(name.text, tuple(_as_term(a) for a in raw_args))
        body, constraints = [], []
        while True:
            if p.accept("bang"):
                bname, bargs = p.raw_atom()
                self.note_relation(bname, len(bargs))
                body.append(Atom(bname.text, tuple(_as_term(a) for a in bargs), True))
            elif p.peek().kind == "ident" and p.peek(1).kind == "(":
                bname, bargs = p.raw_atom()
                self.note_relation(bname, len(bargs))
                body.append(Atom(bname.text, tuple(_as_term(a) for a in bargs)))
            else:
                left = _as_term(p.raw_term())
                p.expect("neq", "'!='")
                right = _as_term(p.raw_term())
                constraints.append(Neq(left, right))
            if p.accept("."):
                break
            p.expect(",", "',' or '.'")
        if not body:
            raise p.error("rule body needs at least one atom", name)
        self.rules.append(Rule(len(self.rules) + 1, head, tuple(body), tuple(constraints)))

    def build(self) -> Program:
        p = self.p
        while p.peek().kind != "eof":
            if p.peek().kind == "decl":
                self.declaration()
            else:
                self.clause()
        if self.declared:
            for name, tok in self.atom_refs:
                if name not in self.declared:
                    raise p.error(f"unknown relation {name}", tok)
        relations = {}
        for name in self.order:
            kind = IDB if name in self.heads else EDB
            if name in self.declared:
                declared_kind = self.declared[name][1]
                if declared_kind is not None and declared_kind != kind:
                    raise p.error(f"relation {name} declared {declared_kind} but is {kind}", self.declared[name][2])
            relations[name] = RelationInfo(self.arity[name], kind)
        for fact in self.facts:
            if relations[fact.relation].kind != EDB:
                raise DatalogError(f"fact {fact} targets derived relation {fact.relation}")
        return Program(relations, tuple(self.rules), tuple(self.facts))


def parse_program(text: str, source: str | None = None) -> Program:
    """Parse program text.  Rules are numbered from 1 in source order."""
    return _ProgramBuilder(_Parser(text, source)).build()


def parse_fact(text: str, source: str | None = None, line: int | None = None) -> Fact:
    """Parse a single ground tuple such as ``load(userSession,admin,session)``."""
    parser = _Parser(text, source)
    if line is not None:
        for tok in parser.toks:
            tok.line = line
    name, raw_args = parser.raw_atom()
    parser.accept(".")
    parser.expect("eof", "end of tuple")
    return Fact(name.text, tuple(_ground(a) for a in raw_args))


def check_fact(program: Program, fact: Fact) -> None:
    info = program.relations.get(fact.relation)
    if info is None:
        raise DatalogError(f"unknown relation {fact.relation}")
    if info.arity != len(fact.values):
        raise ArityError(f"{fact} has arity {len(fact.values)}, expected {info.arity}")


# ---------------------------------------------------------------------------
# validation


def _check_safety(rule: Rule) -> None:
    bound = set()
    for atom in rule.positive():
        bound.update(atom.variables())
    needed = list(rule.head.variables())
    for atom in rule.body:
        if atom.negated:
            needed.extend(atom.variables())
    for c in rule.constraints:
        needed.extend(t for t in (c.left, c.right) if isinstance(t, Var))
    for v in needed:
        if v not in bound:
            raise SafetyViolation(rule.id, v.name)


def dependency_graph(program: Program) -> nx.DiGraph:
    """Edges run from body relation to head relation, over IDB relations only."""
    g = nx.DiGraph()
    g.add_nodes_from(program.idb_relations())
    for rule in program.rules:
        for atom in rule.body:
            if program.is_edb(atom.relation):
                continue
            neg = g.get_edge_data(atom.relation, rule.head.relation, {}).get("negative", False)
            g.add_edge(atom.relation, rule.head.relation, negative=neg or atom.negated)
    return g


def check_program(program: Program) -> Program:
    """Validate safety and stratification; return the program with strata filled in."""
    for rule in program.rules:
        for atom in (rule.head, *rule.body):
            if program.relations[atom.relation].arity != len(atom.args):
                raise ArityError(f"rule {rule.id}: {atom} has the wrong arity")
        _check_safety(rule)
    g = dependency_graph(program)
    cond = nx.condensation(g)
    component = cond.graph["mapping"]
    for rule in program.rules:
        head = rule.head.relation
        for atom in rule.body:
            if atom.negated and not program.is_edb(atom.relation):
                if component[atom.relation] == component[head]:
                    back = nx.shortest_path(g, head, atom.relation) if atom.relation != head else [head]
                    raise UnstratifiableNegation(back + [head])
    order = nx.lexicographical_topological_sort(cond, key=lambda n: min(cond.nodes[n]["members"]))
    strata = tuple(tuple(sorted(cond.nodes[n]["members"])) for n in order)
    return replace(program, strata=strata)


def apply_rule_switches(program: Program) -> Program:
    """Append ``Rule(i)`` to every rule body so rules can be toggled through the EDB."""
    if RULE_SWITCH in program.relations:
        raise DatalogError(f"relation name {RULE_SWITCH} is reserved for rule switches")
    relations = dict(program.relations)
    relations[RULE_SWITCH] = RelationInfo(1, EDB)
    rules = tuple(
        replace(r, body=r.body + (Atom(RULE_SWITCH, (r.id,)),)) for r in program.rules
    )
    return replace(program, relations=relations, rules=rules)


def rule_switch_facts(program: Program) -> list[Fact]:
    return [Fact(RULE_SWITCH, (r.id,)) for r in program.rules]


def format_program(program: Program) -> str:
    lines = [f".decl {name}(arity={info.arity}, kind={info.kind})" for name, info in program.relations.items()]
    lines.extend(str(r) for r in program.rules)
    lines.extend(f"{f}." for f in program.facts)
    return "\n".join(lines) + ("\n" if lines else "")


def iter_facts(program: Program) -> Iterator[Fact]:
    yield from program.facts


def load_program(path, *, check: bool = True) -> Program:
    with open(path, encoding="utf-8") as fh:
        program = parse_program(fh.read(), str(path))
    return check_program(program) if check else program


def facts_by_relation(facts: Iterable[Fact]) -> dict[str, list[Fact]]:
    out: dict[str, list[Fact]] = {}
    for f in facts:
        out.setdefault(f.relation, []).append(f)
    return out
