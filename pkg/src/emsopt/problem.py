"""Problem instances for the battery-power MPC problem.

    min  F(u)
    s.t. x = x0 - Psi u,   x_lo <= x <= x_hi,   u_lo <= u <= u_hi

``Psi`` is lower triangular with every entry equal to ``delta``. It is never
stored: ``psi`` and ``psi_t`` apply it as running sums.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import Infeasible, InfeasibleStage, ParseError
from .model import BatteryConstants, StageCoefficients, tighten_limits

FORMAT_VERSION = "ems-problem/1"


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    delta: float
    x0: float
    x_lo: float
    x_hi: float
    stages: tuple
    batt: BatteryConstants
    u_lo: np.ndarray
    u_hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "u_lo", np.array(self.u_lo, dtype=float).reshape(-1))
        object.__setattr__(self, "u_hi", np.array(self.u_hi, dtype=float).reshape(-1))
        self.u_lo.setflags(write=False)
        self.u_hi.setflags(write=False)
        n = len(self.stages)
        if n < 1:
            raise ValueError("horizon must contain at least one stage")
        if self.u_lo.shape != (n,) or self.u_hi.shape != (n,):
            raise ValueError(f"control bounds must have length {n}")
        if not self.delta > 0:
            raise ValueError(f"sample period must be positive, got {self.delta}")
        if not self.x_lo <= self.x0 <= self.x_hi:
            raise ValueError("initial state outside state bounds")
        bad = np.flatnonzero(self.u_lo > self.u_hi)
        if bad.size:
            raise InfeasibleStage(f"u_lo > u_hi at stage {bad[0]}", stage=int(bad[0]))

    @property
    def n(self) -> int:
        return len(self.stages)

    @cached_property
    def coeffs(self) -> StageCoefficients:
        """All stages as one column-valued StageCoefficients."""
        return StageCoefficients.stack(self.stages)

    @property
    def engine_on(self) -> np.ndarray:
        return self.coeffs.engine_on

    @property
    def pinned(self) -> np.ndarray:
        """Stages whose control is fixed by an equality."""
        return self.u_lo == self.u_hi

    @classmethod
    def build(cls, stages, batt, *, delta, x0, x_lo, x_hi, eng_limits, em_limits, batt_limits):
        """Construct from raw hardware limits, tightening them per stage."""
        stages = tuple(stages)
        u_lo, u_hi = tighten_limits(StageCoefficients.stack(stages), batt, eng_limits, em_limits, batt_limits)
        return cls(delta=delta, x0=x0, x_lo=x_lo, x_hi=x_hi, stages=stages, batt=batt, u_lo=u_lo, u_hi=u_hi)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "n": self.n,
            "delta": float(self.delta),
            "x0": float(self.x0),
            "x_lo": float(self.x_lo),
            "x_hi": float(self.x_hi),
            "batt": {"v_oc": float(self.batt.v_oc), "r_int": float(self.batt.r_int)},
            "stages": [
                {k: (bool(v) if k == "engine_on" else float(v)) for k, v in asdict(s).items()}
                for s in self.stages
            ],
            "u_lo": [float(v) for v in self.u_lo],
            "u_hi": [float(v) for v in self.u_hi],
        }

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


# -- streaming operators ----------------------------------------------------

def psi(inst: ProblemInstance, v):
    """``Psi @ v``."""
    return inst.delta * np.cumsum(v)


def psi_t(inst: ProblemInstance, v):
    """``Psi.T @ v``."""
    return inst.delta * np.cumsum(np.asarray(v)[::-1])[::-1]


def state_trajectory(inst: ProblemInstance, u) -> np.ndarray:
    """States ``x_1 .. x_N`` reached from ``x0`` under controls ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (inst.n,):
        raise ValueError(f"expected {inst.n} controls, got shape {u.shape}")
    return inst.x0 - psi(inst, u)


# -- feasibility ------------------------------------------------------------

@dataclass(frozen=True)
class FeasibilityTube:
    """Reachable state-of-charge intervals for steps ``0..N`` (length N+1)."""

    lo: np.ndarray
    hi: np.ndarray
    feasible: bool
    first_empty: int | None = None


def tube_from_bounds(x0, x_lo, x_hi, delta, u_lo, u_hi) -> FeasibilityTube:
    """Forward reachability recursion on raw bounds (no instance validation)."""
    u_lo = np.asarray(u_lo, dtype=float)
    u_hi = np.asarray(u_hi, dtype=float)
    n = u_lo.size
    lo = np.empty(n + 1)
    hi = np.empty(n + 1)
    lo[0] = hi[0] = x0
    first_empty = None
    for k in range(n):
        hi[k + 1] = min(x_hi, hi[k] - delta * u_lo[k])
        lo[k + 1] = max(x_lo, lo[k] - delta * u_hi[k])
        if first_empty is None and (hi[k + 1] < lo[k + 1] or u_hi[k] < u_lo[k]):
            first_empty = k + 1
    return FeasibilityTube(lo=lo, hi=hi, feasible=first_empty is None, first_empty=first_empty)


def feasibility_tube(inst: ProblemInstance) -> FeasibilityTube:
    return tube_from_bounds(inst.x0, inst.x_lo, inst.x_hi, inst.delta, inst.u_lo, inst.u_hi)


def trivial_minimizer(inst: ProblemInstance):
    """``u_hi`` when its trajectory respects the state bounds, else None.

    The cost is non-increasing in every ``u_k``, so the upper bound is then
    optimal.
    """
    x = state_trajectory(inst, inst.u_hi)
    if np.all(x >= inst.x_lo) and np.all(x <= inst.x_hi):
        return inst.u_hi.copy()
    return None


# -- random instances -------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Distributions for random single-shot instances.

    Engine and motor hardware limits are not fixed by the benchmark
    protocol; the defaults (engine ``[0, 5e4]`` W, motor ``+-1.5e4`` W) keep
    every tightened bound away from the motor-map vertex.
    """

    p_drv: tuple = (-2.5e3, 1.0e4)
    a2: tuple = (0.5e-5, 1.5e-5)
    a1: tuple = (0.5, 1.5)
    b2: tuple = (0.5e-5, 1.5e-5)
    b1: tuple = (0.5, 1.5)
    a0: float = 0.0
    b0: float = 0.0
    v_oc: float = 300.0
    r_int: float = 0.1
    x_lo: float = 0.0
    x_hi: float = 1.0e5
    x0_fraction: float = 0.9
    delta: float = 1.0
    batt_limits: tuple = (-1.5e4, 1.5e4)
    eng_limits: tuple = (0.0, 5.0e4)
    em_limits: tuple = (-1.5e4, 1.5e4)
    engine_on_prob: float = 1.0
    max_retries: int = 100


def _draw(rng, n, cfg: GeneratorConfig):
    # stream layout: p_drv, a2, a1, b2, b1 (n uniforms each), then engine flags
    p_drv = rng.uniform(*cfg.p_drv, size=n)
    a2 = rng.uniform(*cfg.a2, size=n)
    a1 = rng.uniform(*cfg.a1, size=n)
    b2 = rng.uniform(*cfg.b2, size=n)
    b1 = rng.uniform(*cfg.b1, size=n)
    if cfg.engine_on_prob >= 1.0:
        on = np.ones(n, dtype=bool)
    else:
        on = rng.uniform(size=n) < cfg.engine_on_prob
    return [
        StageCoefficients(a2=a2[k], a1=a1[k], a0=cfg.a0, b2=b2[k], b1=b1[k], b0=cfg.b0,
                          p_drv=p_drv[k], engine_on=bool(on[k]))
        for k in range(n)
    ]


def generate_random(seed: int, n: int, config: GeneratorConfig | None = None) -> ProblemInstance:
    """Draw a feasible random instance.

    Uses numpy's PCG64 seeded with ``seed``. Infeasible draws are discarded
    and redrawn from the same stream, up to ``config.max_retries`` times.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    cfg = config or GeneratorConfig()
    rng = np.random.Generator(np.random.PCG64(seed))
    batt = BatteryConstants(cfg.v_oc, cfg.r_int)
    last = None
    for _ in range(cfg.max_retries + 1):
        stages = _draw(rng, n, cfg)
        try:
            inst = ProblemInstance.build(
                stages, batt, delta=cfg.delta, x0=cfg.x0_fraction * cfg.x_hi + (1 - cfg.x0_fraction) * cfg.x_lo,
                x_lo=cfg.x_lo, x_hi=cfg.x_hi,
                eng_limits=cfg.eng_limits, em_limits=cfg.em_limits, batt_limits=cfg.batt_limits,
            )
        except InfeasibleStage as exc:
            last = exc
            continue
        tube = feasibility_tube(inst)
        if tube.feasible:
            return inst
        last = Infeasible(f"empty tube at step {tube.first_empty}", step=tube.first_empty)
    raise Infeasible(f"no feasible instance after {cfg.max_retries} retries (seed {seed}): {last}")


# -- serialization ----------------------------------------------------------

_STAGE_FIELDS = ("a2", "a1", "a0", "b2", "b1", "b0", "p_drv", "engine_on")


def _get(doc, key, path, kind=float):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError("missing field", field=f"{path}{key}")
    val = doc[key]
    try:
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if isinstance(val, bool):
            raise TypeError
        return kind(val)
    except (TypeError, ValueError):
        raise ParseError(f"expected {kind.__name__}, got {val!r}", field=f"{path}{key}") from None


def from_dict(doc) -> ProblemInstance:
    version = doc.get("version") if isinstance(doc, dict) else None
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported version {version!r}", field="version")
    n = _get(doc, "n", "", int)
    batt_doc = doc.get("batt")
    if batt_doc is None:
        raise ParseError("missing field", field="batt")
    batt = BatteryConstants(_get(batt_doc, "v_oc", "batt."), _get(batt_doc, "r_int", "batt."))
    raw = doc.get("stages")
    if not isinstance(raw, list):
        raise ParseError("missing field", field="stages")
    if len(raw) != n:
        raise ParseError(f"expected {n} stages, got {len(raw)}", field="stages")
    stages = []
    for k, s in enumerate(raw):
        vals = {f: _get(s, f, f"stages[{k}].", bool if f == "engine_on" else float) for f in _STAGE_FIELDS}
        try:
            stages.append(StageCoefficients(**vals))
        except ValueError as exc:
            raise ParseError(str(exc), field=f"stages[{k}]") from None
    bounds = {}
    for key in ("u_lo", "u_hi"):
        arr = doc.get(key)
        if not isinstance(arr, list):
            raise ParseError("missing field", field=key)
        if len(arr) != n:
            raise ParseError(f"expected {n} entries", field=key)
        bounds[key] = [_get({key: v}, key, "", float) for v in arr]
    scalars = {key: _get(doc, key, "") for key in ("delta", "x0", "x_lo", "x_hi")}
    try:
        return ProblemInstance(stages=stages, batt=batt, **scalars, **bounds)
    except (ValueError, InfeasibleStage) as exc:
        raise ParseError(f"invalid instance: {exc}") from None


def dumps(inst: ProblemInstance) -> str:
    return json.dumps(inst.to_dict(), indent=1)


def loads(text: str) -> ProblemInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return from_dict(doc)


def save(inst: ProblemInstance, path) -> None:
    Path(path).write_text(dumps(inst) + "\n")


def load(path) -> ProblemInstance:
    return loads(Path(path).read_text())
