"""Worst implied state-bound violation of the ADMM solution against epsilon."""

import argparse
import csv

from emsopt import admm, bench, generate_random


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[100, 200, 300, 400])
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--seed", type=int, default=9)
    p.add_argument("--eps", type=float, nargs="+", default=[4e4, 4e3, 4e2, 4e1])
    p.add_argument("-o", "--out", default="state_softness.csv")
    args = p.parse_args()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "seed", "epsilon", "iterations", "violation_fraction"])
        for eps in args.eps:
            worst = 0.0
            for n, s in bench.instance_seeds(args.seed, args.n, args.count):
                inst = generate_random(s, n)
                rep = admm.solve(inst, admm.AdmmConfig(epsilon=eps, max_iters=100_000))
                v = bench.implied_violation(inst, rep.u)
                worst = max(worst, v)
                w.writerow([n, s, eps, rep.iterations, v])
            fh.flush()
            print(f"eps={eps:g}: worst violation {100 * worst:.2f}% of the state band")


if __name__ == "__main__":
    main()
