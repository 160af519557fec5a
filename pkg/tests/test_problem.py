import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import BATT, BINDING
from emsopt import (
    GeneratorConfig,
    Infeasible,
    InfeasibleStage,
    ParseError,
    ProblemInstance,
    StageCoefficients,
    feasibility_tube,
    generate_random,
    state_trajectory,
    trivial_minimizer,
)
from emsopt.model import cost_value
from emsopt.oracle import dp_solve
from emsopt.problem import FORMAT_VERSION, dumps, load, loads, psi, psi_t, save, tube_from_bounds

FIXTURE = "tests/fixtures/instance_n20.json"
STAGE = StageCoefficients(a2=1e-5, a1=1.0, a0=0.0, b2=1e-5, b1=1.0, b0=0.0, p_drv=0.0)


def make(n=1, x0=9e4, x_lo=0.0, x_hi=1e5, u_lo=-1.5e4, u_hi=1.5e4, delta=1.0):
    return ProblemInstance(delta=delta, x0=x0, x_lo=x_lo, x_hi=x_hi, stages=[STAGE] * n, batt=BATT,
                           u_lo=np.full(n, u_lo), u_hi=np.full(n, u_hi))


def snapped(inst):
    """Same instance with bounds and x0 rounded inward to whole joules."""
    return ProblemInstance(delta=1.0, x0=float(round(inst.x0)), x_lo=float(np.ceil(inst.x_lo)),
                           x_hi=float(np.floor(inst.x_hi)), stages=inst.stages, batt=inst.batt,
                           u_lo=np.ceil(inst.u_lo), u_hi=np.floor(inst.u_hi))


def reachable_cells(inst):
    """Exhaustive reachability on a 1 J grid (delta = 1): min/max per step."""
    lo_j, hi_j = int(np.ceil(inst.x_lo)), int(np.floor(inst.x_hi))
    size = hi_j - lo_j + 1
    mask = np.zeros(size, dtype=bool)
    mask[int(round(inst.x0)) - lo_j] = True
    out = [(inst.x0, inst.x0)]
    for k in range(inst.n):
        # j is reachable if some reachable i has j = i - u with u in [u_lo, u_hi]
        a = int(np.ceil(inst.u_lo[k]))
        b = int(np.floor(inst.u_hi[k]))
        csum = np.concatenate([[0], np.cumsum(mask)])
        j = np.arange(size)
        i_lo = np.clip(j + a, 0, size)
        i_hi = np.clip(j + b + 1, 0, size)
        mask = csum[i_hi] - csum[np.minimum(i_lo, i_hi)] > 0
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            out.append(None)
            break
        out.append((idx[0] + lo_j, idx[-1] + lo_j))
    return out


# -- instance validation ----------------------------------------------------

def test_instance_validation():
    with pytest.raises(ValueError):
        make(x0=2e5)
    with pytest.raises(ValueError):
        make(delta=0.0)
    with pytest.raises(InfeasibleStage):
        make(u_lo=1.0, u_hi=0.0)
    with pytest.raises(ValueError):
        ProblemInstance(delta=1.0, x0=0.0, x_lo=0.0, x_hi=1.0, stages=[], batt=BATT, u_lo=[], u_hi=[])


def test_instance_is_read_only():
    inst = make(n=3)
    with pytest.raises(ValueError):
        inst.u_lo[0] = 0.0


# -- feasibility tube -------------------------------------------------------

def test_tube_one_step():
    tube = feasibility_tube(make())
    assert tube.feasible
    assert (tube.lo[0], tube.hi[0]) == (9e4, 9e4)
    assert (tube.lo[1], tube.hi[1]) == (7.5e4, 1e5)


def test_tube_reversed_bounds_infeasible():
    tube = tube_from_bounds(5.0, 0.0, 10.0, 1.0, [0.0, 2.0, 0.0], [1.0, 1.0, 1.0])
    assert not tube.feasible and tube.first_empty == 2


def test_tube_empty_step():
    # discharge of at least 6 per step from x0 = 10 empties the tube at step 2
    tube = tube_from_bounds(10.0, 0.0, 10.0, 1.0, [6.0] * 3, [7.0] * 3)
    assert not tube.feasible and tube.first_empty == 2


@pytest.mark.parametrize("seed", range(4))
def test_tube_matches_grid_reachability_n6(seed):
    inst = snapped(generate_random(seed, 6, BINDING))
    tube = feasibility_tube(inst)
    for k, cell in enumerate(reachable_cells(inst)):
        assert abs(tube.lo[k] - cell[0]) <= 1.0 and abs(tube.hi[k] - cell[1]) <= 1.0


@given(st.integers(0, 100_000), st.integers(1, 8), st.sampled_from(["default", "binding"]))
def test_tube_matches_grid_reachability(seed, n, kind):
    cfg = BINDING if kind == "binding" else GeneratorConfig()
    inst = snapped(generate_random(seed, n, cfg))
    tube = feasibility_tube(inst)
    for k, cell in enumerate(reachable_cells(inst)):
        assert abs(tube.lo[k] - cell[0]) <= 1.0 and abs(tube.hi[k] - cell[1]) <= 1.0


@given(st.integers(0, 100_000), st.floats(0.0, 5e3), st.floats(0.0, 5e3))
def test_tube_nesting_under_widening(seed, grow_lo, grow_hi):
    inst = generate_random(seed, 8, BINDING)
    base = feasibility_tube(inst)
    wide = tube_from_bounds(inst.x0, inst.x_lo, inst.x_hi, inst.delta, inst.u_lo - grow_lo, inst.u_hi + grow_hi)
    assert np.all(wide.lo <= base.lo) and np.all(wide.hi >= base.hi)


# -- trivial minimizer ------------------------------------------------------

def test_trivial_minimizer_unconstrained():
    inst = make(n=5, x0=0.0, x_lo=-1e12, x_hi=1e12)
    np.testing.assert_array_equal(trivial_minimizer(inst), inst.u_hi)


def test_trivial_minimizer_one_step():
    inst = make()
    assert state_trajectory(inst, inst.u_hi)[0] == 7.5e4
    np.testing.assert_array_equal(trivial_minimizer(inst), inst.u_hi)


def test_trivial_minimizer_none_when_discharge_binds():
    inst = generate_random(0, 100)
    assert np.min(state_trajectory(inst, inst.u_hi)) < inst.x_lo
    assert trivial_minimizer(inst) is None


@pytest.mark.parametrize("seed", range(6))
def test_trivial_minimizer_is_optimal(seed):
    inst = generate_random(seed, 2 + seed % 3)
    u_bar = trivial_minimizer(inst)
    assert u_bar is not None
    _, dp_cost = dp_solve(inst)
    f_bar = cost_value(inst, u_bar)
    tol = 1e-9 * (1.0 + abs(f_bar))
    assert dp_cost >= f_bar - tol
    rng = np.random.default_rng(seed)
    for _ in range(200):
        u = inst.u_lo + (inst.u_hi - inst.u_lo) * rng.uniform(size=inst.n)
        assert cost_value(inst, u) >= f_bar - tol


# -- operators --------------------------------------------------------------

def test_state_trajectory_small():
    inst = make(n=3, x0=10.0, x_lo=-100.0, x_hi=100.0)
    np.testing.assert_array_equal(state_trajectory(inst, np.zeros(3)), [10.0, 10.0, 10.0])
    np.testing.assert_array_equal(state_trajectory(inst, [1.0, 2.0, 3.0]), [9.0, 7.0, 4.0])
    with pytest.raises(ValueError):
        state_trajectory(inst, [1.0, 2.0])


def test_operators_match_dense(rng):
    inst = generate_random(5, 50, GeneratorConfig(delta=0.7))
    dense = np.tril(np.full((50, 50), inst.delta))
    v = rng.normal(size=50) * 1e4
    np.testing.assert_allclose(psi(inst, v), dense @ v, rtol=1e-12, atol=1e-12 * np.abs(v).sum())
    np.testing.assert_allclose(psi_t(inst, v), dense.T @ v, rtol=1e-12, atol=1e-12 * np.abs(v).sum())
    u = inst.u_lo + (inst.u_hi - inst.u_lo) * rng.uniform(size=50)
    np.testing.assert_allclose(state_trajectory(inst, u), inst.x0 - dense @ u, rtol=1e-12)


# -- generator --------------------------------------------------------------

def test_generator_deterministic():
    a, b = generate_random(42, 30), generate_random(42, 30)
    assert dumps(a) == dumps(b)
    np.testing.assert_array_equal(a.u_lo, b.u_lo)
    assert dumps(a) != dumps(generate_random(43, 30))


def test_generator_ranges():
    inst = generate_random(1, 1000)
    c = inst.coeffs
    assert np.all((c.p_drv >= -2.5e3) & (c.p_drv <= 1e4))
    assert np.all((c.a2 >= 0.5e-5) & (c.a2 <= 1.5e-5)) and np.all((c.b2 >= 0.5e-5) & (c.b2 <= 1.5e-5))
    assert np.all((c.a1 >= 0.5) & (c.a1 <= 1.5)) and np.all((c.b1 >= 0.5) & (c.b1 <= 1.5))
    assert np.all(c.a0 == 0) and np.all(c.b0 == 0) and np.all(c.engine_on)
    assert (inst.x0, inst.x_lo, inst.x_hi, inst.delta) == (9e4, 0.0, 1e5, 1.0)
    assert (inst.batt.v_oc, inst.batt.r_int) == (300.0, 0.1)
    assert np.all(inst.u_lo >= -1.5e4) and np.all(inst.u_hi <= 1.5e4)


def test_generator_stream_layout():
    rng = np.random.Generator(np.random.PCG64(9))
    p_drv = rng.uniform(-2.5e3, 1e4, size=4)
    a2 = rng.uniform(0.5e-5, 1.5e-5, size=4)
    inst = generate_random(9, 4)
    np.testing.assert_array_equal(inst.coeffs.p_drv, p_drv)
    np.testing.assert_array_equal(inst.coeffs.a2, a2)


@pytest.mark.parametrize("n", [100, 200, 300, 400])
def test_generated_instances_feasible(n):
    for seed in range(25):
        assert feasibility_tube(generate_random(seed, n)).feasible


def test_generator_engine_off_pins_controls():
    inst = generate_random(3, 40, GeneratorConfig(engine_on_prob=0.5))
    off = ~inst.engine_on
    assert off.any() and inst.engine_on.any()
    np.testing.assert_array_equal(inst.u_lo[off], inst.u_hi[off])
    np.testing.assert_array_equal(inst.pinned, inst.u_lo == inst.u_hi)


def test_generator_gives_up():
    # engine always off and positive demand: every stage discharges from an empty battery
    cfg = GeneratorConfig(x0_fraction=0.0, p_drv=(1e3, 1e4), engine_on_prob=1e-12, max_retries=3)
    with pytest.raises(Infeasible):
        generate_random(0, 5, cfg)


# -- serialization ----------------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_round_trip(seed, n):
    inst = generate_random(seed, n, GeneratorConfig(engine_on_prob=0.8))
    back = loads(dumps(inst))
    assert back == inst
    np.testing.assert_array_equal(back.u_lo, inst.u_lo)
    np.testing.assert_array_equal(back.engine_on, inst.engine_on)


def test_save_load(tmp_path):
    inst = generate_random(8, 12)
    save(inst, tmp_path / "x.json")
    assert load(tmp_path / "x.json") == inst


def test_fixture_parses():
    inst = load(FIXTURE)
    assert inst.n == 20 and feasibility_tube(inst).feasible
    assert inst == generate_random(2024, 20)
    assert json.load(open(FIXTURE))["version"] == FORMAT_VERSION


@pytest.mark.parametrize("path,field", [
    (("x0",), "x0"),
    (("batt", "r_int"), "batt.r_int"),
    (("stages", 3, "p_drv"), "stages[3].p_drv"),
    (("u_hi",), "u_hi"),
])
def test_missing_field_named(path, field):
    doc = generate_random(1, 5).to_dict()
    node = doc
    for key in path[:-1]:
        node = node[key]
    del node[path[-1]]
    with pytest.raises(ParseError) as info:
        loads(json.dumps(doc))
    assert info.value.field == field
    assert field in str(info.value)


def test_parse_errors():
    doc = generate_random(1, 3).to_dict()
    with pytest.raises(ParseError, match="version"):
        loads(json.dumps({**doc, "version": "ems-problem/0"}))
    with pytest.raises(ParseError) as info:
        loads('{\n "version": "ems-problem/1",\n "n": 3,,\n}')
    assert info.value.line == 3
    with pytest.raises(ParseError, match="stages"):
        loads(json.dumps({**doc, "n": 4}))
    bad = json.loads(json.dumps(doc))
    bad["stages"][0]["engine_on"] = "yes"
    with pytest.raises(ParseError, match=r"stages\[0\]\.engine_on"):
        loads(json.dumps(bad))
    bad = json.loads(json.dumps(doc))
    bad["stages"][1]["a2"] = -1.0
    with pytest.raises(ParseError, match=r"stages\[1\]"):
        loads(json.dumps(bad))
    bad = json.loads(json.dumps(doc))
    bad["x0"] = 1e9
    with pytest.raises(ParseError, match="invalid instance"):
        loads(json.dumps(bad))
