#!/usr/bin/env python3
"""Unstable-disk growth on the cat map, plus the time-t flow family sweep.

The growth curve packs each iterated unstable disk with disjoint
sub-disks and fits log(count) against the step; the sweep repeats that
for time-t maps of the constant-roof suspension, where the rate should
scale linearly in t.
"""

import argparse
import math
from pathlib import Path

from entroflow import runner

ROOT = Path(__file__).resolve().parents[1]
LOG_LAMBDA = math.log((3.0 + math.sqrt(5.0)) / 2.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs", help="record output directory")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument(
        "--skip-sweep", action="store_true", help="only run the single growth curve"
    )
    args = ap.parse_args()

    record = runner.run(
        ROOT / "configs" / "growth_catmap.json", args.out, workers=args.workers
    )
    res = record.results
    print(f"== growth_catmap.json (record {record.id[:12]}) ==")
    print(f"{'N':>3} {'count':>8} {'log(count)':>12} {'arclength':>12}")
    for n, count, logc, arc in res["growth_table"]:
        print(f"{n:>3} {count:>8} {logc:>12.6f} {arc:>12.6f}")
    print(
        f"rate {res['rate']:.6f}  eigenvalue rate {LOG_LAMBDA:.6f}  "
        f"stderr {res['rate_stderr']:.2e}"
    )

    if args.skip_sweep:
        return
    print()
    master, _ = runner.sweep(
        ROOT / "configs" / "flow_family_sweep.json", args.out, workers=args.workers
    )
    print(f"== flow_family_sweep.json (record {master.id[:12]}) ==")
    print(f"{'t':>5} {'rate':>10} {'t*log(lam)':>11}")
    for row in master.results["points"]:
        t = row["params"]["t"]
        if row["error"] is None:
            print(f"{t:>5} {row['rate']:>10.6f} {t * LOG_LAMBDA:>11.6f}")
        else:
            print(f"{t:>5} FAILED: {row['error']}")


if __name__ == "__main__":
    main()
