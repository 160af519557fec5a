"""Parameter tuning grids for both solvers (same as ``emsopt sweep``).

IPM cells record iterations to termination over (mu0, k_mu); ADMM cells
record ||u^(100) - u*|| over (rho1, rho2). Also prints the best cell of the
per-cell mean.
"""

import argparse
import csv
from collections import defaultdict

import numpy as np

from emsopt import bench


def best_cell(path):
    acc = defaultdict(list)
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            acc[(float(r["value1"]), float(r["value2"]))].append(float(r["value"]))
    means = {k: np.nanmean(v) if np.any(np.isfinite(v)) else np.inf for k, v in acc.items()}
    return min(means.items(), key=lambda kv: kv[1])


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--solver", choices=("ipm", "admm"), nargs="+", default=["ipm", "admm"])
    p.add_argument("--n", type=int, nargs="+", default=[100, 200, 300, 400])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="sweep")
    args = p.parse_args()
    workers = bench.workers_from_env()
    for solver in args.solver:
        out = f"{args.prefix}_{solver}.csv"
        rows = bench.sweep(solver, args.n, args.count, args.points, args.seed, out, workers=workers,
                           progress=lambda n, s: print(f"{solver} n={n} seed={s}", flush=True))
        (a, b), val = best_cell(out)
        print(f"{solver}: {rows} rows in {out}; best mean cell ({a:.3g}, {b:.3g}) -> {val:.4g}")


if __name__ == "__main__":
    main()
