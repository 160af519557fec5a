import ast
from pathlib import Path

import numpy as np
import pytest

from conftest import BATT, BINDING, random_stage
from emsopt import GeneratorConfig, GridTooCoarse, Infeasible, ProblemInstance, generate_random, trivial_minimizer
from emsopt import admm, ipm, oracle
from emsopt.model import battery_power_inverse, cost_value, stage_cost_eval, tighten_limits
from emsopt.oracle import DpGrid, dp_solve, fd_check


def test_grid_needs_two_points():
    with pytest.raises(ValueError):
        DpGrid(state_points=1)


def test_refined_grid_nests_nodes():
    g = DpGrid(state_points=11, control_points=21).refined()
    assert (g.state_points, g.control_points) == (21, 41)


def test_horizon_cap():
    with pytest.raises(ValueError, match="cap"):
        dp_solve(generate_random(0, 51))
    dp_solve(generate_random(0, 3), cap=3)


# demand above the motor limit forces the engine on, so F(u_hi) > 0
HIGH_DEMAND = GeneratorConfig(p_drv=(2.0e4, 3.0e4))


@pytest.mark.parametrize("cfg", [None, HIGH_DEMAND], ids=["default", "high_demand"])
@pytest.mark.parametrize("seed", range(4))
def test_trivial_instance_matches_upper_bound_cost(seed, cfg):
    inst = generate_random(seed, 4, cfg)
    u_bar = trivial_minimizer(inst)
    assert u_bar is not None
    _, cost = dp_solve(inst)
    f = cost_value(inst, u_bar)
    # default instances can run engine-free, with F(u_hi) at rounding level
    assert abs(cost - f) <= 5e-3 * abs(f) + 1e-6
    if cfg is HIGH_DEMAND:
        assert f > 1e3


@pytest.mark.parametrize("seed", range(8))
def test_single_stage_matches_scalar_search(seed):
    inst = generate_random(seed, 1, BINDING)
    grid = DpGrid()
    u, _ = dp_solve(inst, grid)
    # cost is non-increasing in u, so the answer is the largest admissible control
    lo = max(inst.u_lo[0], (inst.x0 - inst.x_hi) / inst.delta)
    hi = min(inst.u_hi[0], (inst.x0 - inst.x_lo) / inst.delta)
    cand = np.linspace(lo, hi, 20001)
    best = cand[np.argmin(stage_cost_eval(inst.stages[0], inst.batt, inst.delta, cand).value)]
    cell = (hi - lo) / (grid.refined().control_points - 1)
    assert abs(u[0] - best) <= cell


@pytest.mark.parametrize("seed", range(6))
def test_four_stage_cross_check_with_solvers(seed):
    inst = generate_random(seed, 4, BINDING)
    assert trivial_minimizer(inst) is None
    _, c_ref = dp_solve(inst)
    c_ipm = cost_value(inst, ipm.solve(inst).u)
    c_admm = cost_value(inst, admm.solve(inst, admm.AdmmConfig(epsilon=0.1, max_iters=100_000)).u)
    scale = max(abs(c_ref), 1.0)
    assert abs(c_ipm - c_ref) <= 5e-3 * scale
    assert abs(c_admm - c_ref) <= 5e-3 * scale


@pytest.mark.parametrize("seed", range(4))
def test_rollout_is_feasible(seed):
    inst = generate_random(seed, 12, BINDING)
    u, cost = dp_solve(inst)
    x = inst.x0 - inst.delta * np.cumsum(u)
    tol = 1e-9 * inst.x_hi
    assert np.all(u >= inst.u_lo - 1e-9) and np.all(u <= inst.u_hi + 1e-9)
    assert np.all(x >= inst.x_lo - tol) and np.all(x <= inst.x_hi + tol)
    assert cost == pytest.approx(cost_value(inst, u), rel=1e-13)


@pytest.mark.parametrize("seed", range(4))
def test_refinement_does_not_raise_cost(seed):
    inst = generate_random(seed, 6, BINDING)
    grid = DpGrid(state_points=41, control_points=41)
    costs = []
    for _ in range(3):
        costs.append(cost_value(inst, oracle._iterative_dp(inst, grid)))
        grid = grid.refined()
    noise = 1e-6 * abs(costs[-1]) + 1e-9
    assert all(b <= a + noise for a, b in zip(costs, costs[1:])), costs


def test_coarse_grid_detected():
    inst = generate_random(2, 4, BINDING)
    with pytest.raises(GridTooCoarse):
        dp_solve(inst, DpGrid(state_points=3, control_points=3, refine_iters=0, passes=1), refine_tol=1e-9)


def test_infeasible_instance_names_step():
    stages = [random_stage(np.random.default_rng(k)) for k in range(3)]
    inst = ProblemInstance(
        delta=1.0, x0=0.0, x_lo=0.0, x_hi=1e5, stages=stages, batt=BATT,
        u_lo=[5e2, 5e2, 5e2], u_hi=[1e3, 1e3, 1e3],
    )
    with pytest.raises(Infeasible) as info:
        dp_solve(inst)
    assert info.value.step == 1


def test_oracle_does_not_import_solvers():
    src = Path(oracle.__file__).read_text()
    names = set()
    for node in ast.walk(ast.parse(src)):
        if isinstance(node, ast.ImportFrom):
            names.add(node.module or "")
            names.update(a.name for a in node.names)
        elif isinstance(node, ast.Import):
            names.update(a.name for a in node.names)
    for banned in ("ipm", "admm", "bench", "_kernels"):
        assert not any(banned in n for n in names), names


# -- finite differences -----------------------------------------------------

# steps small enough for round-off to dominate (eps*|f|/step > 1e-10) are excluded
@pytest.mark.parametrize("step", [2.0**-10, 1e-2, 10.0])
def test_fd_linear_exact(step):
    pts = np.linspace(-3.0, 7.0, 50)
    assert fd_check(lambda x: 3.0 * x - 2.0, lambda x: np.full_like(x, 3.0), pts, step) <= 1e-10


def test_fd_multivariate_quadratic():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(20, 4))
    assert fd_check(lambda p: float(p @ p), lambda p: 2.0 * p, pts, 1e-3) <= 1e-8


def test_fd_detects_wrong_gradient():
    pts = np.linspace(1.0, 2.0, 10)
    assert fd_check(np.square, lambda x: 2.1 * x, pts, 1e-4) > 1e-2


def _feasible_points(c, rng, m=100):
    # strictly inside the tightened bounds, clear of the motor-map vertex
    lo, hi = tighten_limits(c, BATT, (0.0, 5e4), (-1.5e4, 1.5e4), (-1.5e4, 1.5e4))
    pad = 0.02 * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, m)


@pytest.mark.parametrize("seed", range(3))
def test_stage_cost_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    c = random_stage(rng)
    pts = _feasible_points(c, rng)
    battery_power_inverse(c, BATT, pts)  # raises if any point leaves the domain
    err = fd_check(lambda u: stage_cost_eval(c, BATT, 1.0, u).value,
                   lambda u: stage_cost_eval(c, BATT, 1.0, u).gradient, pts, 1e-2)
    assert err <= 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_stage_cost_hessian_fd(seed):
    rng = np.random.default_rng(seed)
    c = random_stage(rng)
    pts = _feasible_points(c, rng)
    err = fd_check(lambda u: stage_cost_eval(c, BATT, 1.0, u).gradient,
                   lambda u: stage_cost_eval(c, BATT, 1.0, u).hessian, pts, 1e-1)
    assert err <= 1e-4
