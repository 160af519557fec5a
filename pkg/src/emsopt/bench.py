"""Benchmark harness and command-line interface.

Subcommands::

    emsopt gen      write seeded random instances and a manifest
    emsopt solve    run one solver on one instance file, print a run record
    emsopt sweep    tuning grids (IPM: mu0 x k_mu, ADMM: rho1 x rho2)
    emsopt scaling  iterations and timings against horizon length

Exit codes:

    0   success (solver converged)
    1   unexpected error
    2   bad command line
    3   iteration limit reached (the record still holds the best iterate)
    4   infeasible instance (empty stage interval or empty tube)
    5   interior point start not strictly interior
    6   malformed instance file
    7   numerical failure inside a solver
    130 interrupted (partial CSV rows are kept)

``EMSOPT_WORKERS`` sets the number of worker processes for ``sweep`` and
``scaling`` (default 1). Each solver run stays single-threaded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, admm, ipm, oracle
from .errors import (
    DomainError,
    GridTooCoarse,
    Infeasible,
    InfeasibleStage,
    IterationLimit,
    LinearSolveFailure,
    ParseError,
    StrictInteriorViolation,
    SubSolverStall,
)
from .model import cost_value
from .problem import GeneratorConfig, generate_random, load, save, state_trajectory
from .report import SolveReport

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_ITERATION_LIMIT = 3
EXIT_INFEASIBLE = 4
EXIT_STRICT_INTERIOR = 5
EXIT_PARSE = 6
EXIT_NUMERICAL = 7
EXIT_INTERRUPTED = 130

# exception class -> exit code; checked in order
EXIT_CODES = (
    (IterationLimit, EXIT_ITERATION_LIMIT),
    (StrictInteriorViolation, EXIT_STRICT_INTERIOR),
    (Infeasible, EXIT_INFEASIBLE),
    (InfeasibleStage, EXIT_INFEASIBLE),
    (ParseError, EXIT_PARSE),
    (LinearSolveFailure, EXIT_NUMERICAL),
    (SubSolverStall, EXIT_NUMERICAL),
    (DomainError, EXIT_NUMERICAL),
    (GridTooCoarse, EXIT_NUMERICAL),
)

# converged IPM with mu0 = mu_bar = 1e5 is the reference optimum u*
REFERENCE_CONFIG = ipm.IpmConfig(mu0=1e5, mu_bar=1e5)

SOLVERS = ("ipm", "admm", "oracle")


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return EXIT_ERROR


def workers_from_env(default=1) -> int:
    raw = os.environ.get("EMSOPT_WORKERS", "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


# -- solver dispatch --------------------------------------------------------

def default_config(solver: str):
    if solver == "ipm":
        return ipm.IpmConfig()
    if solver == "admm":
        return admm.AdmmConfig()
    if solver == "oracle":
        return oracle.DpGrid()
    raise ValueError(f"unknown solver {solver!r}")


def parse_overrides(solver: str, pairs) -> object:
    """Apply ``key=value`` strings to the solver's default config."""
    cfg = default_config(solver)
    types = {f.name: f.type for f in fields(cfg)}
    updates = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or key not in types:
            raise ValueError(f"unknown {solver} option {key!r}; choose from {sorted(types)}")
        kind = int if types[key] in (int, "int") else float
        updates[key] = kind(float(value)) if kind is int else kind(value)
    return replace(cfg, **updates)


def run_solver(inst, solver: str, config=None, **kw) -> SolveReport:
    """Run a solver; IterationLimit propagates with its report attached."""
    config = config or default_config(solver)
    if solver == "ipm":
        return ipm.solve(inst, config, **kw)
    if solver == "admm":
        return admm.solve(inst, config, **kw)
    if solver == "oracle":
        t0 = time.perf_counter()
        u, _ = oracle.dp_solve(inst, config)
        dt = time.perf_counter() - t0
        return SolveReport(solver="oracle", u=u, x=state_trajectory(inst, u), iterations=1, iter_times=[dt])
    raise ValueError(f"unknown solver {solver!r}")


def reference_solution(inst) -> np.ndarray:
    return ipm.solve(inst, REFERENCE_CONFIG).u


# -- run records ------------------------------------------------------------

@dataclass
class RunRecord:
    seed: int | None
    n: int
    solver: str
    config: dict
    iterations: int
    termination: str
    total_time: float
    mean_iter_time: float
    setup_time: float
    iter_times: list = field(default_factory=list)
    final_residuals: list = field(default_factory=list)
    cost: float = float("nan")
    ref_cost: float | None = None
    cost_error: float | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def make_record(inst, report: SolveReport, config, *, seed=None, ref_cost=None) -> RunRecord:
    cost = cost_value(inst, report.u)
    if report.residual_pairs:
        final = [float(v) for v in report.residual_pairs[-1]]
    else:
        final = [float(report.residuals[-1])] if report.residuals else []
    times = [float(t) for t in report.iter_times]
    err = None
    if ref_cost is not None:
        err = abs(cost - ref_cost) / max(abs(ref_cost), np.finfo(float).tiny)
    return RunRecord(
        seed=seed, n=inst.n, solver=report.solver, config=asdict(config),
        iterations=int(report.iterations), termination=report.termination,
        total_time=float(sum(times)), mean_iter_time=float(np.mean(times)) if times else 0.0,
        setup_time=float(report.setup_time), iter_times=times, final_residuals=final,
        cost=float(cost), ref_cost=None if ref_cost is None else float(ref_cost), cost_error=err,
    )


# -- experiment building blocks ---------------------------------------------

def generator_config(args) -> GeneratorConfig:
    cfg = GeneratorConfig()
    for pair in getattr(args, "gen_set", None) or ():
        key, _, value = pair.partition("=")
        cur = getattr(cfg, key, None)
        if cur is None or isinstance(cur, tuple):
            raise ValueError(f"unknown or non-scalar generator option {key!r}")
        cfg = replace(cfg, **{key: type(cur)(value)})
    return cfg


def instance_seeds(seed: int, ns, count: int):
    """(n, seed) pairs: instance i at horizon n uses ``seed + 1000 * n + i``."""
    return [(n, seed + 1000 * n + i) for n in ns for i in range(count)]


def fit_exponent(ns, values) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])


def ipm_grid(points: int):
    """(mu0, k_mu) pairs: mu0 log-spaced in [1e-5, 1e1], k_mu in (1, 1e5 / mu0]."""
    cells = []
    for mu0 in np.logspace(-5, 1, points):
        top = np.log10(REFERENCE_CONFIG.mu_bar / mu0)
        for t in np.linspace(1.0 / points, 1.0, points):
            cells.append((float(mu0), float(10 ** (t * top))))
    return cells


def admm_grid(points: int):
    return [(float(r1), float(r2)) for r1 in np.logspace(-6, -2, points) for r2 in np.logspace(-8, -4, points)]


def _ipm_sweep_cell(args):
    inst, mu0, k_mu = args
    cfg = ipm.IpmConfig(mu0=mu0, mu_bar=REFERENCE_CONFIG.mu_bar, k_mu=k_mu)
    try:
        rep = ipm.solve(inst, cfg)
        return rep.iterations, rep.termination
    except IterationLimit as exc:
        return exc.report.iterations, "iteration_limit"
    except Exception as exc:  # a failing cell is data, not a crash
        return -1, type(exc).__name__


def _admm_sweep_cell(args):
    inst, u_star, rho1, rho2, iters = args
    try:
        rep = admm.solve(inst, admm.AdmmConfig(rho1=rho1, rho2=rho2), fixed_iters=iters)
        return float(np.linalg.norm(rep.u - u_star)), "fixed"
    except Exception as exc:
        return float("nan"), type(exc).__name__


def _map(fn, items, workers):
    """Ordered results of ``fn`` over ``items``, as a generator."""
    if workers <= 1:
        yield from map(fn, items)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers)))


SWEEP_FIELDS = ("solver", "n", "seed", "param1", "value1", "param2", "value2", "metric", "value", "status")


def sweep(solver, ns, count, points, seed, out_path, *, gen_config=None, iters=100, workers=1,
          progress=None) -> int:
    """Write one long-format CSV row per (instance, grid cell); returns rows written.

    IPM rows hold iterations to termination, ADMM rows hold
    ``||u^(iters) - u*||``. Rows are flushed as they are produced, so an
    interrupted sweep leaves a valid partial file.
    """
    pairs = instance_seeds(seed, ns, count)
    written = 0
    with open(out_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        fh.flush()
        for n, s in pairs:
            inst = generate_random(s, n, gen_config)
            if solver == "ipm":
                cells = ipm_grid(points)
                results = _map(_ipm_sweep_cell, [(inst, a, b) for a, b in cells], workers)
                names, metric = ("mu0", "k_mu"), "iterations"
            elif solver == "admm":
                u_star = reference_solution(inst)
                cells = admm_grid(points)
                results = _map(_admm_sweep_cell, [(inst, u_star, a, b, iters) for a, b in cells], workers)
                names, metric = ("rho1", "rho2"), f"u{iters}_error"
            else:
                raise ValueError(f"sweep supports ipm and admm, not {solver!r}")
            for (a, b), (val, status) in zip(cells, results):
                w.writerow({"solver": solver, "n": n, "seed": s, "param1": names[0], "value1": a,
                            "param2": names[1], "value2": b, "metric": metric, "value": val,
                            "status": status})
                written += 1
            fh.flush()
            if progress:
                progress(n, s)
    return written


SCALING_FIELDS = ("solver", "n", "seed", "iterations", "termination", "mean_iter_time", "total_time",
                  "setup_time", "total_time_raw", "first_iter_time_raw", "cost", "ref_cost", "cost_error",
                  "version")


def _scaling_run(args):
    solver, n, s, gen_config = args
    inst = generate_random(s, n, gen_config)
    ref = cost_value(inst, reference_solution(inst))
    cfg = default_config(solver)
    if solver == "admm":
        admm._zeta_factor.cache_clear()  # charge the factorization to this run
    try:
        rep = run_solver(inst, solver, cfg)
    except IterationLimit as exc:
        rep = exc.report
    rec = make_record(inst, rep, cfg, seed=s, ref_cost=ref)
    # raw columns charge the offline factorization to the first iteration
    first = rec.iter_times[0] if rec.iter_times else 0.0
    return {
        "solver": solver, "n": n, "seed": s, "iterations": rec.iterations, "termination": rec.termination,
        "mean_iter_time": rec.mean_iter_time, "total_time": rec.total_time, "setup_time": rec.setup_time,
        "total_time_raw": rec.total_time + rec.setup_time, "first_iter_time_raw": first + rec.setup_time,
        "cost": rec.cost, "ref_cost": rec.ref_cost, "cost_error": rec.cost_error, "version": rec.version,
    }


def scaling(solvers, ns, count, seed, out_path, *, gen_config=None, workers=1, progress=None):
    """Per-run CSV rows plus fitted exponents ``{solver: {metric: slope}}``."""
    jobs = [(solver, n, s, gen_config) for n, s in instance_seeds(seed, ns, count) for solver in solvers]
    rows = []
    with open(out_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SCALING_FIELDS)
        w.writeheader()
        fh.flush()
        for row in _map(_scaling_run, jobs, workers):
            w.writerow(row)
            fh.flush()
            rows.append(row)
            if progress:
                progress(row)
    return rows, scaling_exponents(rows)


def scaling_exponents(rows) -> dict:
    out = {}
    for solver in sorted({r["solver"] for r in rows}):
        sel = [r for r in rows if r["solver"] == solver]
        ns = sorted({r["n"] for r in sel})
        if len(ns) < 2:
            continue
        per_n = {m: [np.mean([r[m] for r in sel if r["n"] == n]) for n in ns]
                 for m in ("mean_iter_time", "total_time", "total_time_raw")}
        out[solver] = {m: fit_exponent(ns, v) for m, v in per_n.items()}
    return out


def mu_bar_continuation(inst, mu_bars=None) -> tuple[np.ndarray, list]:
    """Solve with ``mu0 = mu_bar`` for each mu_bar; returns the mu_bars and
    ``||u*_i - u*_{i-1}||`` for i >= 1."""
    mu_bars = np.logspace(2, 5, 20) if mu_bars is None else np.asarray(mu_bars)
    prev, diffs = None, []
    for mb in mu_bars:
        u = ipm.solve(inst, ipm.IpmConfig(mu0=float(mb), mu_bar=float(mb))).u
        if prev is not None:
            diffs.append(float(np.linalg.norm(u - prev)))
        prev = u
    return mu_bars, diffs


def cost_error_curves(inst, *, admm_iters=100, ipm_config=None, admm_config=None):
    """``|F(u^(j)) - F(u*)|`` per iteration for both solvers, and F(u*)."""
    f_star = cost_value(inst, reference_solution(inst))
    try:
        rep_i = ipm.solve(inst, ipm_config, record_iterates=True)
    except IterationLimit as exc:
        rep_i = exc.report
    rep_a = admm.solve(inst, admm_config, fixed_iters=admm_iters, record_iterates=True)
    err_i = [abs(cost_value(inst, u) - f_star) for u in rep_i.iterates[1:]]
    err_a = [abs(cost_value(inst, u) - f_star) for u in rep_a.iterates[1:]]
    return np.array(err_i), np.array(err_a), f_star


def implied_violation(inst, u) -> float:
    """Worst state-bound violation of ``x0 - Psi u`` as a fraction of the state band."""
    x = state_trajectory(inst, u)
    worst = max(0.0, float(np.max(inst.x_lo - x)), float(np.max(x - inst.x_hi)))
    return worst / (inst.x_hi - inst.x_lo)


# -- commands ---------------------------------------------------------------

def cmd_gen(seed, n, count, out_dir, gen_config=None) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    seeds = [seed + i for i in range(count)]
    for s in seeds:
        path = out / f"instance_n{n}_s{s}.json"
        save(generate_random(s, n, gen_config), path)
        files.append(path.name)
    manifest = {"version": __version__, "n": n, "seeds": seeds, "files": files,
                "generator": asdict(gen_config or GeneratorConfig())}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return [out / f for f in files]


def cmd_solve(path, solver, config=None, *, reference=False):
    """Returns ``(record, exit_code, report)``."""
    inst = load(path)
    config = config or default_config(solver)
    ref = cost_value(inst, reference_solution(inst)) if reference else None
    try:
        rep = run_solver(inst, solver, config)
        code = EXIT_OK
    except IterationLimit as exc:
        rep, code = exc.report, EXIT_ITERATION_LIMIT
    return make_record(inst, rep, config, ref_cost=ref), code, rep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emsopt", description="PHEV energy-management MPC solvers and benchmarks")
    p.add_argument("--version", action="version", version=f"emsopt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def gen_opts(sp):
        sp.add_argument("--gen-set", action="append", metavar="KEY=VALUE",
                        help="override a scalar GeneratorConfig field (repeatable)")

    g = sub.add_parser("gen", help="write random instances")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-n", "--n", type=int, required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("-o", "--out", required=True, help="output directory")
    gen_opts(g)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    s.add_argument("--solver", choices=SOLVERS, default="ipm")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="solver config override (repeatable)")
    s.add_argument("--reference", action="store_true", help="also compute the reference cost and error")
    s.add_argument("--full", action="store_true", help="include u and x in the output")
    s.add_argument("-o", "--out", help="write JSON here instead of stdout")

    w = sub.add_parser("sweep", help="parameter tuning grid")
    w.add_argument("--solver", choices=("ipm", "admm"), required=True)
    w.add_argument("--n", type=int, nargs="+", default=[100, 200, 300, 400])
    w.add_argument("--count", type=int, default=20)
    w.add_argument("--points", type=int, default=20, help="log-spaced points per axis")
    w.add_argument("--iters", type=int, default=100, help="fixed ADMM iterations")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("-o", "--out", required=True)
    gen_opts(w)

    c = sub.add_parser("scaling", help="iterations and timing against horizon length")
    c.add_argument("--solver", choices=("ipm", "admm"), nargs="+", default=["ipm", "admm"])
    c.add_argument("--n", type=int, nargs="+", default=[50, 100, 200, 500, 1000])
    c.add_argument("--count", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("-o", "--out", required=True)
    c.add_argument("--summary", help="write fitted exponents as JSON here")
    gen_opts(c)
    return p


def _err(msg):
    print(f"emsopt: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            paths = cmd_gen(args.seed, args.n, args.count, args.out, generator_config(args))
            for path in paths:
                print(path)
            return EXIT_OK
        if args.command == "solve":
            try:
                cfg = parse_overrides(args.solver, args.set)
            except ValueError as exc:
                _err(str(exc))
                return EXIT_USAGE
            rec, code, rep = cmd_solve(args.instance, args.solver, cfg, reference=args.reference)
            doc = rec.to_dict()
            if args.full:
                doc["u"] = [float(v) for v in rep.u]
                doc["x"] = [float(v) for v in rep.x]
            text = json.dumps(doc, indent=1)
            if args.out:
                Path(args.out).write_text(text + "\n")
            else:
                print(text)
            if code == EXIT_ITERATION_LIMIT:
                _err(f"iteration limit reached after {rec.iterations} iterations")
            return code
        if args.command == "sweep":
            n = sweep(args.solver, args.n, args.count, args.points, args.seed, args.out,
                      gen_config=generator_config(args), iters=args.iters, workers=workers_from_env())
            print(f"{n} rows written to {args.out}")
            return EXIT_OK
        if args.command == "scaling":
            rows, exps = scaling(args.solver, args.n, args.count, args.seed, args.out,
                                 gen_config=generator_config(args), workers=workers_from_env())
            for solver, e in exps.items():
                print(f"{solver}: " + ", ".join(f"{k} exponent {v:.2f}" for k, v in e.items()))
            if args.summary:
                Path(args.summary).write_text(json.dumps(exps, indent=1) + "\n")
            return EXIT_OK
    except KeyboardInterrupt:
        _err("interrupted; partial results kept")
        return EXIT_INTERRUPTED
    except OSError as exc:
        _err(str(exc))
        return EXIT_ERROR
    except Exception as exc:
        code = exit_code_for(exc)
        if code == EXIT_ERROR and isinstance(exc, ValueError):
            code = EXIT_USAGE
        step = getattr(exc, "step", None)
        stage = getattr(exc, "stage", None)
        extra = f" (step {step})" if step is not None else f" (stage {stage})" if stage is not None else ""
        _err(f"{type(exc).__name__}: {exc}{extra}")
        return code
    return EXIT_ERROR
