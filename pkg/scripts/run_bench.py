"""Run the desk-scale bench (provenance repair vs ddmin) and write a CSV.

    python3 scripts/run_bench.py --out bench.csv --per-kind 3 --tasks rollback localization
"""

import argparse
import sys
from collections import defaultdict
from pathlib import Path

from incdebug.bench import BenchConfig, bench_csv, default_config, run_bench
from incdebug.repair import ENCODINGS, LOCALIZATION, ROLLBACK


def summarise(cells) -> str:
    by_method = defaultdict(lambda: {"cells": 0, "ok": 0, "size": 0, "invocations": 0, "runtime": 0.0})
    for _no, cell in cells:
        m = by_method[cell.method]
        m["cells"] += 1
        if cell.status == "ok":
            m["ok"] += 1
            m["size"] += cell.size or 0
            m["invocations"] += cell.invocations or 0
            m["runtime"] += cell.runtime or 0.0
    lines = [f"{'method':<12}{'cells':>6}{'ok':>5}{'Σsize':>8}{'Σinvoc':>8}{'Σtime(s)':>10}"]
    for name, m in sorted(by_method.items()):
        lines.append(
            f"{name:<12}{m['cells']:>6}{m['ok']:>5}{m['size']:>8}{m['invocations']:>8}{m['runtime']:>10.2f}"
        )
    return "\n".join(lines)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, help="CSV path (stdout when omitted)")
    ap.add_argument("--config", type=Path, help="JSON bench config; overrides the size flags")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--per-kind", type=int, default=3)
    ap.add_argument("--tasks", nargs="+", choices=(ROLLBACK, LOCALIZATION), default=[ROLLBACK])
    ap.add_argument("--encoding", choices=ENCODINGS, default="auto")
    ap.add_argument("--timeout", type=float, default=600.0)
    args = ap.parse_args()

    if args.config:
        cfg = BenchConfig.load(args.config)
    else:
        cfg = default_config(args.seed, args.per_kind)
        cfg.tasks = tuple(args.tasks)
        cfg.timeout = args.timeout
    cfg.encoding = args.encoding

    cells = run_bench(cfg)
    text = bench_csv(cfg, cells)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(summarise(cells), file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
