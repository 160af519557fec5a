"""|F(u^(j)) - F(u*)| per iteration for IPM (to termination) and ADMM (100 iterations)."""

import argparse
import csv

from emsopt import bench, generate_random


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[100, 200, 300, 400])
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--seed", type=int, default=5)
    p.add_argument("--admm-iters", type=int, default=100)
    p.add_argument("-o", "--out", default="convergence_curves.csv")
    args = p.parse_args()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "n", "seed", "iteration", "abs_cost_error", "f_star"])
        for n, s in bench.instance_seeds(args.seed, args.n, args.count):
            err_i, err_a, f_star = bench.cost_error_curves(generate_random(s, n), admm_iters=args.admm_iters)
            for solver, errs in (("ipm", err_i), ("admm", err_a)):
                for j, e in enumerate(errs, start=1):
                    w.writerow([solver, n, s, j, e, f_star])
            fh.flush()
            print(f"n={n} seed={s} ipm final {err_i[-1] / abs(f_star):.2e} admm final {err_a[-1] / abs(f_star):.2e}")


if __name__ == "__main__":
    main()
