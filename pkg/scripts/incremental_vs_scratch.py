"""Time incremental maintenance against re-evaluation on transitive closure.

Each row: a random graph of n nodes, then a sequence of mixed diffs, each
applied incrementally and re-evaluated from scratch.  The IDBs are
compared after every step.

    python3 scripts/incremental_vs_scratch.py --sizes 100 200 400 --diff 2
"""

import argparse
import random
import time

from incdebug.engine import Diff, evaluate
from incdebug.frontend import Fact, check_program, parse_program

PROGRAM = "P(X, Y) :- E(X, Y).\nP(X, Z) :- E(X, Y), P(Y, Z)."


def run(n: int, edges: int, diff: int, steps: int, seed: int) -> tuple[float, float]:
    rnd = random.Random(seed)
    program = check_program(parse_program(PROGRAM))
    pairs = [Fact("E", (a, b)) for a in range(n) for b in range(n)]
    edb = set(rnd.sample(pairs, edges))
    state = evaluate(program, edb)
    inc = scratch = 0.0
    for _ in range(steps):
        dels = set(rnd.sample(sorted(edb), diff // 2))
        ins = set(rnd.sample([f for f in pairs if f not in edb], diff - len(dels)))
        t0 = time.perf_counter()
        state.apply(Diff(ins, dels))
        t1 = time.perf_counter()
        edb = (edb - dels) | ins
        fresh = evaluate(program, edb)
        t2 = time.perf_counter()
        if state.idb != fresh.idb:
            raise AssertionError(f"mismatch at n={n} seed={seed}")
        inc += t1 - t0
        scratch += t2 - t1
    return inc, scratch


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--density", type=float, default=1.0, help="edges per node")
    ap.add_argument("--diff", type=int, default=2)
    ap.add_argument("--steps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'n':>6}{'edges':>7}{'incremental(s)':>16}{'scratch(s)':>12}{'speedup':>9}")
    for n in args.sizes:
        edges = max(args.diff, int(n * args.density))
        inc, scratch = run(n, edges, args.diff, args.steps, args.seed)
        print(f"{n:>6}{edges:>7}{inc:>16.3f}{scratch:>12.3f}{scratch / max(inc, 1e-9):>9.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
