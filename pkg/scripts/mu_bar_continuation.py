"""Change in the IPM solution as mu_bar grows (mu0 = mu_bar for each solve).

Writes one row per (instance, mu_bar) with ||u*_i - u*_{i-1}||.
"""

import argparse
import csv

from emsopt import bench, generate_random


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[100, 200, 300, 400])
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=2)
    p.add_argument("-o", "--out", default="mu_bar_continuation.csv")
    args = p.parse_args()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "seed", "mu_bar", "delta_u_norm"])
        for n, s in bench.instance_seeds(args.seed, args.n, args.count):
            mu_bars, diffs = bench.mu_bar_continuation(generate_random(s, n))
            for mb, d in zip(mu_bars[1:], diffs):
                w.writerow([n, s, f"{mb:.6g}", d])
            fh.flush()
            print(f"n={n} seed={s} last={diffs[-1]:.3g}")


if __name__ == "__main__":
    main()
