"""Sign agreement between the smoothed and geodesic score surfaces.

Writes both 101x101 surfaces per relation coordinate and a table of sign
agreement against the grid half-width, which shows where the two surfaces
part ways.

    python scripts/landscape_agreement.py --out runs/landscape
"""

import argparse
import os

import numpy as np

from migtf.data import csv_string
from migtf.lorentz import landscape_grid, sign_agreement


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/landscape")
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=101)
    ap.add_argument("--t", type=float, nargs="+", default=[-10.0, 0.0, 10.0])
    ap.add_argument("--radii", type=float, nargs="+", default=[0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 10.0])
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for t in args.t:
        for radius in args.radii:
            lor = landscape_grid([t], -radius, radius, args.steps, args.beta, "lorentz")
            geo = landscape_grid([t], -radius, radius, args.steps, args.beta, "geodesic")
            rows.append([t, radius, f"{sign_agreement(lor, geo):.4f}",
                         f"{np.mean(lor.values > 0):.4f}", f"{np.mean(geo.values > 0):.4f}"])
            if radius == max(args.radii):
                for grid in (lor, geo):
                    with open(os.path.join(args.out, f"{grid.mode}_t{t:g}.csv"), "w", newline="") as fh:
                        fh.write(grid.to_csv())
    table = csv_string(["t", "half_width", "sign_agreement", "lorentz_positive", "geodesic_positive"], rows)
    with open(os.path.join(args.out, "agreement.csv"), "w", newline="") as fh:
        fh.write(table)
    print(table, end="")


if __name__ == "__main__":
    main()
