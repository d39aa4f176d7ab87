"""Reading and writing facts directories, diff files and fault files."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable

from .engine import Diff, FactStore
from .errors import DiffConflict, FaultSpecError, ParseError
from .frontend import EDB, Fact, Program, check_fact, format_value, intern_constant, parse_fact

FACTS_SUFFIX = ".facts"


def _tsv_row(fact: Fact) -> str:
    cells = []
    for v in fact.values:
        text = str(v)
        if "\t" in text or "\n" in text:
            raise ValueError(f"constant {text!r} cannot be stored in a tab-separated file")
        cells.append(text)
    return "\t".join(cells)


def read_facts_dir(program: Program, directory, *, strict: bool = True) -> FactStore:
    """Load ``<relation>.facts`` files for every EDB relation of ``program``.

    Facts written inline in the program text are included.  Missing files
    mean empty relations; files naming unknown relations are an error when
    ``strict`` is set.
    """
    directory = Path(directory)
    store = FactStore.for_program(program, EDB)
    for f in program.facts:
        store.add(f)
    if not directory.is_dir():
        raise FileNotFoundError(f"facts directory {directory} does not exist")
    for path in sorted(directory.glob("*" + FACTS_SUFFIX)):
        name = path.name[: -len(FACTS_SUFFIX)]
        info = program.relations.get(name)
        if info is None or info.kind != EDB:
            if strict:
                raise ParseError(f"no EDB relation named {name}", 1, 1, str(path))
            continue
        with open(path, encoding="utf-8", newline="") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                cells = line.split("\t")
                if len(cells) != info.arity:
                    raise ParseError(
                        f"expected {info.arity} columns, found {len(cells)}", lineno, 1, str(path)
                    )
                store.add(Fact(name, tuple(intern_constant(c) for c in cells)))
    return store


def write_facts_dir(store: FactStore, directory, relations: Iterable[str] | None = None) -> None:
    """Write one sorted ``.facts`` file per relation (empty files included)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = sorted(relations if relations is not None else store.relations)
    for name in names:
        rows = [_tsv_row(f) + "\n" for f in store.facts(name)] if name in store.relations else []
        (directory / (name + FACTS_SUFFIX)).write_text("".join(rows), encoding="utf-8")


def parse_diff(text: str, program: Program | None = None, source: str | None = None) -> Diff:
    """Parse ``+rel(...)`` / ``-rel(...)`` lines; ``//`` and ``#`` start comments."""
    ins: dict[Fact, int] = {}
    dels: dict[Fact, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("//") or line.startswith("#"):
            continue
        sign, body = line[0], line[1:].strip()
        if sign not in "+-":
            raise ParseError("diff lines start with + or -", lineno, 1, source)
        fact = parse_fact(body, source, lineno)
        if program is not None:
            try:
                check_fact(program, fact)
            except Exception as exc:
                raise DiffConflict(str(exc), fact, lineno) from None
            if not program.is_edb(fact.relation):
                raise DiffConflict(f"{fact} is not an EDB tuple", fact, lineno)
        mine, other = (ins, dels) if sign == "+" else (dels, ins)
        if fact in other:
            raise DiffConflict(f"{fact} is both inserted and deleted", fact, lineno)
        if fact in mine:
            raise DiffConflict(f"duplicate entry {sign}{fact}", fact, lineno)
        mine[fact] = lineno
    return Diff(frozenset(ins), frozenset(dels))


def read_diff(path, program: Program | None = None) -> Diff:
    return parse_diff(Path(path).read_text(encoding="utf-8"), program, str(path))


def format_diff(d: Diff, footer: Iterable[str] = ()) -> str:
    lines = [f"{sign}{fact}" for sign, fact in d.entries()]
    lines += [f"// {c}" for c in footer]
    return "".join(line + "\n" for line in lines)


def write_diff(d: Diff, path, footer: Iterable[str] = ()) -> None:
    Path(path).write_text(format_diff(d, footer), encoding="utf-8")


def parse_faults(text: str, program: Program | None = None, source: str | None = None):
    """Return ``(unwanted, missing)`` fact sets from a fault file."""
    unwanted, missing = set(), set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("//") or line.startswith("#"):
            continue
        word, _, rest = line.partition(" ")
        if word not in ("unwanted", "missing"):
            raise FaultSpecError(f"{source or '<faults>'}:{lineno}: expected 'unwanted' or 'missing'")
        fact = parse_fact(rest.strip(), source, lineno)
        if program is not None:
            check_fact(program, fact)
            if program.is_edb(fact.relation):
                raise FaultSpecError(f"{source or '<faults>'}:{lineno}: {fact} is not an IDB tuple")
        (unwanted if word == "unwanted" else missing).add(fact)
    both = unwanted & missing
    if both:
        raise FaultSpecError(f"{min(both)} is both unwanted and missing")
    return frozenset(unwanted), frozenset(missing)


def read_faults(path, program: Program | None = None):
    return parse_faults(Path(path).read_text(encoding="utf-8"), program, str(path))


def format_faults(unwanted: Iterable[Fact], missing: Iterable[Fact]) -> str:
    lines = [f"unwanted {f}" for f in sorted(unwanted)] + [f"missing {f}" for f in sorted(missing)]
    return "".join(line + "\n" for line in lines)


def csv_text(header: list[str], rows: Iterable[list], comments: Iterable[str] = ()) -> str:
    """RFC-4180 CSV with optional leading ``#`` comment lines."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


__all__ = [
    "csv_text",
    "format_diff",
    "format_faults",
    "format_value",
    "parse_diff",
    "parse_faults",
    "read_diff",
    "read_facts_dir",
    "read_faults",
    "write_diff",
    "write_facts_dir",
]
