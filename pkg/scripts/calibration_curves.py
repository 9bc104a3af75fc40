#!/usr/bin/env python3
"""Print the temperature and sensitivity calibration tables.

Usage: python scripts/calibration_curves.py [--counts 85 90 92]

Shows how expected model weights move across the temperature grid and
how the belief squash responds to the sensitivity scalar at the three
probe magnitudes (faint noise, boundary, strong signal). Handy when
picking T and lambda for a new dataset.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from evifuse.analytics import sweep_sensitivity, sweep_temperature


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", type=int, nargs="+", default=[85, 90, 92])
    args = parser.parse_args()

    names = [f"model_{chr(ord('A') + j)}" for j in range(len(args.counts))]
    t_curve = sweep_temperature(args.counts, model_ids=names)
    print(f"expected weights vs temperature (counts = {args.counts})")
    header = "T".rjust(10) + "".join(n.rjust(12) for n in names)
    print(header)
    for i, t in enumerate(t_curve.xs):
        row = f"{t:10.3f}" + "".join(f"{t_curve.series[n][i]:12.4f}" for n in names)
        print(row)

    share = np.array(args.counts, dtype=float)
    share /= share.sum()
    print(f"\nlow-temperature limit (count shares): {np.round(share, 4).tolist()}")

    s_curve = sweep_sensitivity()
    probes = list(s_curve.series)
    print("\nbelief mass vs sensitivity (unit weight)")
    print("lambda".rjust(10) + "".join(p.rjust(14) for p in probes))
    for i, lam in enumerate(s_curve.xs):
        print(f"{lam:10.2f}" + "".join(f"{s_curve.series[p][i]:14.4f}" for p in probes))
    return 0


if __name__ == "__main__":
    sys.exit(main())
