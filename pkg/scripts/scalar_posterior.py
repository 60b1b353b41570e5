"""Posterior variance of the scalar problem with and without the inverse-operator term.

    python scripts/scalar_posterior.py --out scalar.csv

Rows (B, R, A_da, A_vivid) on a grid over (0, 2]^2 with H = P = 1.
"""

import argparse
import csv

import numpy as np

from vivid.assimilation import scalar_posterior


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="scalar_posterior.csv")
    ap.add_argument("--n", type=int, default=50)
    args = ap.parse_args()

    grid = np.linspace(2.0 / args.n, 2.0, args.n)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["B", "R", "A_da", "A_vivid"])
        for b in grid:
            for r in grid:
                a_da, a_vivid = scalar_posterior(b, r, 1.0, 1.0)
                w.writerow([repr(float(b)), repr(float(r)), repr(float(a_da)), repr(float(a_vivid))])
    a_da, a_vivid = scalar_posterior(1.0, 1.0, 1.0, 1.0)
    print(f"B = R = P = H = 1: A_da = {a_da:.4f}, A_vivid = {a_vivid:.4f}")


if __name__ == "__main__":
    main()
