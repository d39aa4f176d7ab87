"""Sweep generated instances and check every repair with a from-scratch oracle.

For each instance: localization must reproduce the faults on E1, rollback
must eliminate them, and the tree and graph encodings must agree on the
rollback size (tree budget hits are counted, not failed).

    python3 scripts/sweep_correctness.py --seeds 40
"""

import argparse
import time
from collections import Counter

from incdebug.errors import EnumerationBudgetExceeded
from incdebug.repair import FaultSet, eliminates, full_localize, full_rollback_repair, reproduces
from incdebug.workloads import generate

CONFIGS = [
    ("tc", dict(insertions=4)),
    ("tc", dict(insertions=4, deletions=4, missing_faults=1)),
    ("diamond", dict()),
    ("pointsto", dict()),
    ("pointsto", dict(deletions=3, missing_faults=1)),
    ("guard", dict()),
    ("guard", dict(insertions=5, deletions=5, faults=2, missing_faults=2)),
]


def check(inst, tally: Counter) -> list[str]:
    problems = []
    faults = FaultSet(frozenset(inst.io.undesirable), frozenset(inst.io.desirable))
    loc = full_localize(inst.program, inst.e1, inst.diff, inst.io)
    rb = full_rollback_repair(inst.program, inst.e1, inst.diff, inst.io)
    if not reproduces(inst.program, inst.e1, loc.tuples, faults):
        problems.append("localize")
    if not eliminates(inst.program, inst.e1, inst.diff, rb.tuples, faults):
        problems.append("rollback")
    tally["graph fallbacks"] += rb.graph_encodings
    try:
        trees = full_rollback_repair(inst.program, inst.e1, inst.diff, inst.io, encoding="trees")
    except EnumerationBudgetExceeded:
        tally["tree budget"] += 1
        return problems
    graph = full_rollback_repair(inst.program, inst.e1, inst.diff, inst.io, encoding="graph")
    tally["encodings compared"] += 1
    if len(trees) != len(graph):
        tally["encodings differ"] += 1
        problems.append(f"trees {len(trees)} vs graph {len(graph)}")
    return problems


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=25)
    ap.add_argument("--start", type=int, default=0)
    args = ap.parse_args()

    failures = []
    for kind, params in CONFIGS:
        tally: Counter = Counter()
        start = time.perf_counter()
        for seed in range(args.start, args.start + args.seeds):
            inst = generate(kind, seed, **params)
            for p in check(inst, tally):
                failures.append(f"{inst.name}: {p}")
        label = f"{kind} {params}" if params else kind
        print(f"{label:<70} {dict(tally)} {time.perf_counter() - start:.1f}s")
    print(f"failures: {len(failures)}")
    for f in failures:
        print("  " + f)
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
