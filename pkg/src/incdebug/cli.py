"""Command-line entry point.

Commands share a workspace directory (``--out``) holding the current EDB,
the derived IDB, a journal of applied diffs and a manifest.  The IDB is
always re-derived from the EDB when a workspace is loaded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import bench as benchmod
from .engine import Diff, EngineState, FactStore, evaluate, reverse
from .errors import DatalogError, DeltaDebugTimeout
from .formats import format_diff, read_diff, read_facts_dir, read_faults, write_diff, write_facts_dir
from .frontend import Fact, Program, load_program, parse_fact
from .ilp import DEFAULT_NODE_BUDGET
from .provenance import (
    DEFAULT_TREE_LIMIT,
    format_tree,
    format_tree_records,
    incremental_provenance,
    min_proof_tree,
)
from .repair import (
    ENCODINGS,
    LOCALIZATION,
    ROLLBACK,
    IntendedOutput,
    RepairResult,
    Session,
    apply_to,
    delta_debug,
    full_localize,
    full_rollback_repair,
    verify,
)

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2
MANIFEST = "manifest.json"


class OracleFailure(Exception):
    """A result failed its re-evaluation check."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class Workspace:
    root: Path
    program_path: Path
    program: Program
    edb: FactStore
    epoch: int = 0
    journal: list = field(default_factory=list)

    @classmethod
    def create(cls, root, program_path, facts_dir) -> "Workspace":
        program_path = Path(program_path).resolve()
        program = load_program(program_path)
        edb = read_facts_dir(program, facts_dir)
        ws = cls(Path(root), program_path, program, edb)
        journal_dir = ws.root / "journal"
        if journal_dir.exists():
            shutil.rmtree(journal_dir)
        return ws

    @classmethod
    def load(cls, root) -> "Workspace":
        root = Path(root)
        manifest_path = root / MANIFEST
        if not manifest_path.exists():
            raise FileNotFoundError(f"{root} is not a workspace (no {MANIFEST}); run 'run' first")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        program_path = Path(manifest["program"])
        if _sha256(program_path) != manifest["program_sha256"]:
            raise DatalogError(f"{program_path} changed since the workspace was created")
        program = load_program(program_path)
        edb = read_facts_dir(program, root / "edb")
        return cls(root, program_path, program, edb, manifest["epoch"], list(manifest["journal"]))

    def save(self, state: EngineState) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        write_facts_dir(state.edb, self.root / "edb", self.program.edb_relations())
        write_facts_dir(state.idb, self.root / "idb", self.program.idb_relations())
        manifest = {
            "program": str(self.program_path),
            "program_sha256": _sha256(self.program_path),
            "epoch": self.epoch,
            "journal": self.journal,
        }
        (self.root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def last_diff(self) -> Diff | None:
        if not self.journal:
            return None
        return read_diff(self.root / self.journal[-1], self.program)

    def previous_edb(self) -> set[Fact]:
        """EDB before the last journaled diff."""
        d = self.last_diff()
        facts = set(self.edb.facts())
        if d is None:
            return facts
        return apply_to(facts, reverse(d))


def _summary(state: EngineState) -> str:
    lines = [f"{name}\t{len(state.idb.relation(name))}" for name in sorted(state.program.idb_relations())]
    return "".join(line + "\n" for line in lines)


def cmd_run(args, out) -> int:
    ws = Workspace.create(args.out, args.program, args.facts)
    state = evaluate(ws.program, ws.edb)
    ws.save(state)
    out.write(_summary(state))
    return EXIT_OK


def cmd_diff(args, out) -> int:
    ws = Workspace.load(args.out)
    d = read_diff(args.diff, ws.program)
    state = evaluate(ws.program, ws.edb)
    delta = state.apply(d)
    ws.epoch += 1
    name = f"journal/{ws.epoch:04d}.diff"
    (ws.root / "journal").mkdir(parents=True, exist_ok=True)
    write_diff(d, ws.root / name)
    ws.journal.append(name)
    ws.save(state)
    text = format_diff(Diff(delta.inserted, delta.deleted))
    (ws.root / "delta.diff").write_text(text, encoding="utf-8")
    out.write(text)
    return EXIT_OK


def cmd_explain(args, out) -> int:
    ws = Workspace.load(args.out)
    t = parse_fact(args.tuple)
    if args.incremental:
        d = ws.last_diff()
        if d is None:
            raise DatalogError("no diff has been applied in this workspace")
        state = evaluate(ws.program, ws.previous_edb())
        state.apply(d)
        tree, affected = incremental_provenance(state, t, d)
    else:
        state = evaluate(ws.program, ws.edb)
        tree, affected = min_proof_tree(state, t), set()
    if args.format in ("text", "both"):
        out.write(format_tree(tree, affected))
    if args.format == "both":
        out.write("\n")
    if args.format in ("records", "both"):
        out.write(format_tree_records(tree))
    return EXIT_OK


def _problem(args):
    """Program, E1, diff and intended output from flags or from a workspace."""
    if args.program:
        if not (args.facts and args.diff):
            raise DatalogError("--program needs --facts and --diff")
        program = load_program(args.program)
        e1 = set(read_facts_dir(program, args.facts).facts())
        d = read_diff(args.diff, program)
    else:
        ws = Workspace.load(args.out)
        program = ws.program
        d = ws.last_diff()
        if d is None:
            raise DatalogError("no diff has been applied in this workspace")
        e1 = ws.previous_edb()
    unwanted, missing = read_faults(args.faults, program) if args.faults else (frozenset(), frozenset())
    return program, e1, d, IntendedOutput(missing, unwanted)


def _repair(args, out, kind: str) -> int:
    program, e1, d, io = _problem(args)
    start = time.perf_counter()
    if args.method == "ddmin":
        try:
            res: RepairResult = delta_debug(program, e1, d, io, kind, timeout=args.timeout)
        except DeltaDebugTimeout as exc:
            res = exc.result
    else:
        fn = full_rollback_repair if kind == ROLLBACK else full_localize
        session = Session.start(program, e1, d)
        res = fn(
            program, e1, d, io,
            limit=args.limit_trees, node_budget=args.ilp_node_budget, session=session, encoding=args.encoding,
        )
    runtime = time.perf_counter() - start
    faults = io.violations(evaluate(program, apply_to(e1, d)))
    if res.complete and not verify(program, e1, d, faults, res):
        raise OracleFailure(f"{kind} result failed re-evaluation")
    footer = [f"method: {args.method}"] + res.footer()
    if not args.omit_timing:
        footer.append(f"runtime_s: {runtime:.4f}")
    text = format_diff(res.tuples, footer)
    if args.result:
        Path(args.result).write_text(text, encoding="utf-8")
    out.write(text)
    return EXIT_OK


def cmd_localize(args, out) -> int:
    return _repair(args, out, LOCALIZATION)


def cmd_rollback(args, out) -> int:
    return _repair(args, out, ROLLBACK)


def cmd_bench(args, out) -> int:
    if args.config:
        cfg = benchmod.BenchConfig.load(args.config)
        cfg.omit_timing = cfg.omit_timing or args.omit_timing
    elif args.quick:
        cfg = benchmod.quick_config(args.seed, args.omit_timing)
    else:
        cfg = benchmod.default_config(args.seed, args.per_kind, args.omit_timing)
    if args.timeout is not None:
        cfg.timeout = args.timeout
    cfg.limit_trees = args.limit_trees
    cfg.node_budget = args.ilp_node_budget
    cfg.encoding = args.encoding
    if args.tasks:
        cfg.tasks = tuple(args.tasks)
    cells = benchmod.run_bench(cfg)
    text = benchmod.bench_csv(cfg, cells)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(text, encoding="utf-8", newline="")
    else:
        out.write(text)
    if any(c.status == "oracle-failed" for _no, c in cells):
        raise OracleFailure("a benchmark result failed re-evaluation")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incdebug", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workspace_default=True):
        p.add_argument("--out", default="incdebug-out" if workspace_default else None, help="workspace directory")

    p = sub.add_parser("run", help="evaluate a program and create a workspace")
    p.add_argument("--program", required=True)
    p.add_argument("--facts", required=True)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diff", help="apply a diff to the workspace and print the IDB change")
    p.add_argument("--diff", required=True)
    common(p)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("explain", help="print a proof tree")
    p.add_argument("tuple")
    p.add_argument("--incremental", action="store_true", help="cut subtrees the last diff did not touch")
    p.add_argument("--format", choices=("text", "records", "both"), default="both")
    common(p)
    p.set_defaults(func=cmd_explain)

    for name, func in (("localize", cmd_localize), ("rollback", cmd_rollback)):
        p = sub.add_parser(name, help=f"{name} faults within a diff")
        p.add_argument("--faults")
        p.add_argument("--method", choices=("provenance", "ddmin"), default="provenance")
        p.add_argument("--program")
        p.add_argument("--facts")
        p.add_argument("--diff")
        p.add_argument("--limit-trees", type=int, default=DEFAULT_TREE_LIMIT)
        p.add_argument("--ilp-node-budget", type=int, default=DEFAULT_NODE_BUDGET)
        p.add_argument("--encoding", choices=ENCODINGS, default="auto", help="how rollback ILPs are built")
        p.add_argument("--timeout", type=float, default=600.0)
        p.add_argument("--result", help="also write the result diff here")
        p.add_argument("--omit-timing", action="store_true")
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="compare provenance repair with ddmin on generated workloads")
    p.add_argument("--config", help="JSON benchmark configuration")
    p.add_argument("--quick", action="store_true", help="small workloads")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-kind", type=int, default=3)
    p.add_argument("--tasks", nargs="+", choices=(ROLLBACK, LOCALIZATION))
    p.add_argument("--timeout", type=float)
    p.add_argument("--limit-trees", type=int, default=DEFAULT_TREE_LIMIT)
    p.add_argument("--ilp-node-budget", type=int, default=DEFAULT_NODE_BUDGET)
    p.add_argument("--encoding", choices=ENCODINGS, default="auto", help="how rollback ILPs are built")
    p.add_argument("--omit-timing", action="store_true", help="blank runtimes for byte-stable output")
    p.add_argument("--csv", help="write the CSV here instead of stdout")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except OracleFailure as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INTERNAL
    except (DatalogError, OSError, ValueError, json.JSONDecodeError) as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        err.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
