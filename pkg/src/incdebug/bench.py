"""Desk-scale comparison of provenance-based repair against ddmin.

Output is long-format CSV, one row per (workload, method).  Every result
is checked by from-scratch re-evaluation before it is written, and ddmin
results are additionally checked for 1-minimality.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .engine import Diff, evaluate
from .errors import DeltaDebugTimeout, EnumerationBudgetExceeded, NodeBudgetExceeded
from .formats import csv_text
from .ilp import DEFAULT_NODE_BUDGET
from .provenance import DEFAULT_TREE_LIMIT
from .repair import (
    LOCALIZATION,
    ROLLBACK,
    FaultSet,
    RepairResult,
    apply_to,
    delta_debug,
    eliminates,
    full_localize,
    full_rollback_repair,
    reproduces,
)
from .workloads import Instance, generate

HEADER = [
    "benchmark",
    "no",
    "task",
    "method",
    "diff_size",
    "faults",
    "negation",
    "size",
    "runtime_s",
    "invocations",
    "status",
    "verified",
    "one_minimal",
]


@dataclass(frozen=True)
class Workload:
    kind: str
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.kind}-{self.seed}"


@dataclass
class BenchConfig:
    workloads: list = field(default_factory=list)
    tasks: tuple = (ROLLBACK,)
    timeout: float = 600.0
    limit_trees: int = DEFAULT_TREE_LIMIT
    node_budget: int = DEFAULT_NODE_BUDGET
    encoding: str = "auto"
    omit_timing: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        data["workloads"] = [Workload(w["kind"], w["seed"], w.get("params", {})) for w in data.get("workloads", [])]
        data["tasks"] = tuple(data.get("tasks", (ROLLBACK,)))
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# 50 insertions and 50 deletions per diff on sparse inputs; the negation
# workloads use smaller diffs so that their fault sets stay non-trivial.
DESK_WORKLOADS = [
    ("tc", dict(nodes=120, edges=110, insertions=50, deletions=50, faults=2)),
    ("diamond", dict(layers=6, width=4, base_fraction=0.5, faults=1)),
    ("pointsto", dict(variables=40, objects=12, fields=4, statements=70, insertions=50, deletions=50, faults=2)),
    ("guard", dict(nodes=30, edges=30, insertions=10, deletions=10, faults=1, missing_faults=1)),
]


def default_config(seed: int = 0, per_kind: int = 3, omit_timing: bool = False) -> BenchConfig:
    workloads = [
        Workload(kind, seed + i, params) for kind, params in DESK_WORKLOADS for i in range(per_kind)
    ]
    return BenchConfig(workloads=workloads, omit_timing=omit_timing)


def quick_config(seed: int = 0, omit_timing: bool = False) -> BenchConfig:
    """Small workloads for smoke tests."""
    small = [
        ("tc", dict(nodes=30, edges=28, insertions=10, deletions=10, faults=1)),
        ("diamond", dict(layers=3, width=3)),
        ("pointsto", dict(variables=10, objects=4, fields=2, statements=14, insertions=6, deletions=4)),
        ("guard", dict(nodes=10, edges=12, insertions=4, deletions=4, faults=1, missing_faults=1)),
    ]
    workloads = [Workload(kind, seed + i, params) for kind, params in small for i in range(3)]
    return BenchConfig(workloads=workloads, timeout=60.0, omit_timing=omit_timing)


@dataclass
class Cell:
    workload: Workload
    task: str
    method: str
    diff_size: int
    faults: int
    negation: bool
    size: int | None = None
    runtime: float | None = None
    invocations: int | None = None
    status: str = "ok"
    verified: bool | None = None
    one_minimal: bool | None = None

    def row(self, no: int, omit_timing: bool) -> list:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, bool):
                return "yes" if x else "no"
            return x

        runtime = "" if self.runtime is None else ("-" if omit_timing else f"{self.runtime:.4f}")
        return [
            self.workload.kind,
            no,
            self.task,
            self.method,
            self.diff_size,
            self.faults,
            fmt(self.negation),
            fmt(self.size),
            runtime,
            fmt(self.invocations),
            self.status,
            fmt(self.verified),
            fmt(self.one_minimal),
        ]


def _fault_set(inst: Instance) -> FaultSet:
    s2 = evaluate(inst.program, apply_to(inst.e1, inst.diff))
    return inst.io.violations(s2)


def _check(inst: Instance, faults: FaultSet, task: str, chosen: Diff) -> bool:
    if task == LOCALIZATION:
        return reproduces(inst.program, inst.e1, chosen, faults)
    return eliminates(inst.program, inst.e1, inst.diff, chosen, faults)


def one_minimal(inst: Instance, faults: FaultSet, task: str, chosen: Diff) -> bool:
    """Removing any single entry of ``chosen`` breaks its defining property."""
    entries = chosen.entries()
    for i in range(len(entries)):
        smaller = Diff.from_entries(entries[:i] + entries[i + 1:])
        if _check(inst, faults, task, smaller):
            return False
    return True


def run_cell(inst: Instance, w: Workload, task: str, method: str, cfg: BenchConfig, faults: FaultSet) -> Cell:
    cell = Cell(w, task, method, len(inst.diff), len(faults.all()), inst.negation)
    start = time.perf_counter()
    try:
        if method == "provenance":
            fn = full_rollback_repair if task == ROLLBACK else full_localize
            res: RepairResult = fn(
                inst.program,
                inst.e1,
                inst.diff,
                inst.io,
                limit=cfg.limit_trees,
                node_budget=cfg.node_budget,
                encoding=cfg.encoding,
            )
        else:
            res = delta_debug(inst.program, inst.e1, inst.diff, inst.io, task, timeout=cfg.timeout)
    except DeltaDebugTimeout as exc:
        cell.runtime = time.perf_counter() - start
        cell.status = "Timeout"
        cell.invocations = exc.result.engine_invocations
        return cell
    except (EnumerationBudgetExceeded, NodeBudgetExceeded):
        cell.runtime = time.perf_counter() - start
        cell.status = "Budget"
        cell.invocations = 0
        return cell
    cell.runtime = time.perf_counter() - start
    cell.size = len(res.tuples)
    cell.invocations = res.engine_invocations
    cell.verified = _check(inst, faults, task, res.tuples)
    if method == "ddmin":
        cell.one_minimal = one_minimal(inst, faults, task, res.tuples)
    if not cell.verified:
        cell.status = "oracle-failed"
    return cell


def run_bench(cfg: BenchConfig, methods: tuple = ("provenance", "ddmin")) -> list[tuple[int, Cell]]:
    out = []
    for no, w in enumerate(cfg.workloads, 1):
        inst = generate(w.kind, w.seed, **w.params)
        faults = _fault_set(inst)
        for task in cfg.tasks:
            for method in methods:
                out.append((no, run_cell(inst, w, task, method, cfg, faults)))
    return out


def bench_csv(cfg: BenchConfig, cells: list[tuple[int, Cell]]) -> str:
    comments = [
        "incremental repair vs ddmin, desk scale",
        f"timeout_s={cfg.timeout} limit_trees={cfg.limit_trees} ilp_node_budget={cfg.node_budget}"
        f" encoding={cfg.encoding}",
    ]
    for no, w in enumerate(cfg.workloads, 1):
        comments.append(f"workload {no}: kind={w.kind} seed={w.seed} params={json.dumps(w.params, sort_keys=True)}")
    rows = [cell.row(no, cfg.omit_timing) for no, cell in cells]
    return csv_text(HEADER, rows, comments)


def config_dict(cfg: BenchConfig) -> dict:
    data = asdict(cfg)
    data["tasks"] = list(cfg.tasks)
    return data
