#!/usr/bin/env python3
"""Entropy rate along a one-parameter perturbation family.

Probes the center-shear family of the time-1 constant-roof map over an
epsilon schedule and reports the modulus: the largest rate jump between
consecutive family members.
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
        ROOT / "configs" / "continuity_center_shear.json",
        args.out,
        workers=args.workers,
    )
    res = record.results
    print(f"== continuity_center_shear.json (record {record.id[:12]}) ==")
    print(f"{'epsilon':>8} {'rate':>10} {'stderr':>10}")
    for eps, rate, stderr in res["entries"]:
        print(f"{eps:>8} {rate:>10.6f} {stderr:>10.2e}")
    print(f"modulus (max consecutive jump): {res['modulus']:.6f}")


if __name__ == "__main__":
    main()
