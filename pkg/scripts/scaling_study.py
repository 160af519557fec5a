"""Iterations and timings against horizon length, with fitted exponents.

Equivalent to ``emsopt scaling``; exponents are fitted on N >= --fit-from.
"""

import argparse
import json

from emsopt import bench


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[50, 100, 200, 500, 1000])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--fit-from", type=int, default=100)
    p.add_argument("-o", "--out", default="scaling.csv")
    args = p.parse_args()
    rows, _ = bench.scaling(["ipm", "admm"], args.n, args.count, args.seed, args.out,
                            workers=bench.workers_from_env(),
                            progress=lambda r: print(f"{r['solver']} n={r['n']} seed={r['seed']} "
                                                     f"iters={r['iterations']}", flush=True))
    exps = bench.scaling_exponents([r for r in rows if r["n"] >= args.fit_from])
    print(json.dumps(exps, indent=1))


if __name__ == "__main__":
    main()
