#!/usr/bin/env python3
"""Structural checks of the invariant foliations of a time-t map.

Reports holonomy depth-consistency and equivariance gaps, the center
non-expansion ratios over a long horizon, and how densely a growing
unstable leaf fills the mapping torus.
"""

import argparse
from pathlib import Path

from entroflow import runner

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs", help="record output directory")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    record = runner.run(
        ROOT / "configs" / "foliation_check.json", args.out, workers=args.workers
    )
    res = record.results
    print(f"== foliation_check.json (record {record.id[:12]}) ==")
    hol = res["holonomy"]
    print(
        f"holonomy: depth {hol['depth']} vs {hol['depth'] + 1} gap "
        f"{hol['depth_gap']:.3e}; equivariance gap {hol['equivariance_gap']:.3e}"
    )
    non = res["nonexpansion"]
    print(
        f"center non-expansion: forward {non['max_ratio_forward']:.6f}, "
        f"backward {non['max_ratio_backward']:.6f}, bound {non['ratio_bound']:.4f} "
        f"over horizon {non['horizon']} -> {'pass' if non['passed'] else 'FAIL'}"
    )
    print(f"{'L':>4} {'covering radius':>16} {'bound':>8}  ok")
    for L, radius, bound, ok in res["density_rows"]:
        print(f"{L:>4} {radius:>16.4f} {bound:>8.4f}  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
