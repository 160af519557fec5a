"""Convex powertrain model in battery-power coordinates.

Engine fuel map and motor loss map are quadratics in output power, the
battery is an internal-resistance equivalent circuit with constant open
circuit voltage and resistance. With battery power ``u`` as the decision
variable each stage contributes ``delta * f(p_drv - g^{-1}(u))`` to the
cost, a convex non-increasing function of ``u`` on the tightened interval.

Every function here is written with numpy ufuncs so that the coefficient
fields may be scalars or equal-length arrays (one entry per stage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleStage

# Radicands in [-RADICAND_TOL * scale, 0) are rounding noise and clamp to 0.
RADICAND_TOL = 1e-9


@dataclass(frozen=True)
class BatteryConstants:
    v_oc: float = 300.0
    r_int: float = 0.1

    def __post_init__(self):
        if not self.v_oc > 0:
            raise ValueError(f"v_oc must be positive, got {self.v_oc}")
        if not self.r_int > 0:
            raise ValueError(f"r_int must be positive, got {self.r_int}")

    @property
    def k(self) -> float:
        """``4 R / V_oc^2``, the loss coefficient under the square root."""
        return 4.0 * self.r_int / self.v_oc**2

    @property
    def p_max(self) -> float:
        """Largest chemical power the circuit can deliver, ``V_oc^2 / 2R``."""
        return self.v_oc**2 / (2.0 * self.r_int)


@dataclass(frozen=True)
class StageCoefficients:
    """Pre-evaluated quadratic maps and demand for one stage (or all stages,
    when the fields are arrays)."""

    a2: float
    a1: float
    a0: float
    b2: float
    b1: float
    b0: float
    p_drv: float
    engine_on: bool = True

    def __post_init__(self):
        if not np.all(np.asarray(self.a2) > 0):
            raise ValueError("engine coefficient a2 must be strictly positive")
        if not np.all(np.asarray(self.b2) > 0):
            raise ValueError("motor coefficient b2 must be strictly positive")

    @classmethod
    def stack(cls, stages) -> StageCoefficients:
        """Column view of a sequence of scalar stages."""
        cols = {
            name: np.array([getattr(s, name) for s in stages], dtype=float)
            for name in ("a2", "a1", "a0", "b2", "b1", "b0", "p_drv")
        }
        on = np.array([bool(s.engine_on) for s in stages], dtype=bool)
        return cls(engine_on=on, **cols)


@dataclass(frozen=True)
class StageCost:
    value: float | np.ndarray
    gradient: float | np.ndarray
    hessian: float | np.ndarray


def _clamp(rad, scale, what):
    rad = np.asarray(rad, dtype=float)
    if np.any(rad < -RADICAND_TOL * scale):
        raise DomainError(f"negative radicand in {what}: min {np.min(rad):.6g}")
    return np.maximum(rad, 0.0)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def fuel_rate(c: StageCoefficients, p_eng):
    """Engine fuel mass flow; zero on engine-off stages."""
    p = np.asarray(p_eng, dtype=float)
    val = (c.a2 * p + c.a1) * p + c.a0
    return _out(np.where(c.engine_on, val, 0.0))


def motor_input_power(c: StageCoefficients, p_em):
    p = np.asarray(p_em, dtype=float)
    return _out((c.b2 * p + c.b1) * p + c.b0)


def battery_power(c: StageCoefficients, batt: BatteryConstants, p_em):
    """Chemical battery power drawn to deliver motor output ``p_em``."""
    h = motor_input_power(c, p_em)
    rad = _clamp(1.0 - batt.k * np.asarray(h), 1.0, "battery_power")
    # p_max * (1 - sqrt(1 - k h)) == 2 h / (1 + sqrt(1 - k h)), no cancellation
    return _out(2.0 * np.asarray(h) / (1.0 + np.sqrt(rad)))


def _inverse_radicand(c, batt, p_b):
    p_b = np.asarray(p_b, dtype=float)
    rad = -batt.r_int * p_b**2 / (c.b2 * batt.v_oc**2) + (p_b - c.b0) / c.b2 + c.b1**2 / (4.0 * c.b2**2)
    scale = c.b1**2 / (4.0 * c.b2**2) + np.abs(p_b - c.b0) / c.b2 + batt.r_int * p_b**2 / (c.b2 * batt.v_oc**2)
    return rad, np.max(scale)


def battery_power_inverse(c: StageCoefficients, batt: BatteryConstants, p_b):
    """Motor output power that draws chemical power ``p_b``."""
    rad, scale = _inverse_radicand(c, batt, p_b)
    rad = _clamp(rad, scale, "battery_power_inverse")
    return _out(-c.b1 / (2.0 * c.b2) + np.sqrt(rad))


def motor_limit_root(c: StageCoefficients, batt: BatteryConstants):
    """Largest motor power for which the battery model stays real.

    Solves ``b2 x^2 + b1 x + b0 - V_oc^2 / 4R = 0`` with the cancellation-free
    quadratic formula.
    """
    c0 = c.b0 - 1.0 / batt.k
    disc = c.b1**2 - 4.0 * c.b2 * c0
    if np.any(disc < 0):
        raise DomainError("motor input power never reaches the battery limit")
    sq = np.sqrt(disc)
    q = -0.5 * (c.b1 + np.where(c.b1 >= 0, sq, -sq))
    r1 = q / c.b2
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(q != 0, c0 / np.where(q != 0, q, 1.0), r1)
    return _out(np.maximum(r1, r2))


def tighten_limits(c, batt, raw_eng_limits, raw_em_limits, raw_batt_limits):
    """Map raw engine, motor and battery limits to battery-power bounds.

    Engine and motor limits are first restricted to the region where the
    maps are non-decreasing and real valued. The motor bounds implied by the
    engine bounds (``p_drv - p_eng``) are intersected with the motor bounds
    before mapping through g, which keeps g on its monotone branch.

    Returns ``(u_lo, u_hi)``. Engine-off stages return ``(g(p_drv), g(p_drv))``.
    """
    eng_lo, eng_hi = raw_eng_limits
    em_lo, em_hi = raw_em_limits
    pb_lo, pb_hi = raw_batt_limits

    eng_lo = np.maximum(eng_lo, -c.a1 / (2.0 * c.a2))
    em_lo = np.maximum(em_lo, -c.b1 / (2.0 * c.b2))
    em_hi = np.minimum(em_hi, motor_limit_root(c, batt))

    on = np.asarray(c.engine_on, dtype=bool)
    p_drv = np.asarray(c.p_drv, dtype=float)
    mot_lo = np.maximum(em_lo, p_drv - eng_hi)
    mot_hi = np.minimum(em_hi, p_drv - eng_lo)
    # engine-off stages deliver the demand from the motor alone
    mot_lo = np.where(on, mot_lo, p_drv)
    mot_hi = np.where(on, mot_hi, p_drv)

    bad = (mot_lo > mot_hi) | (p_drv > em_hi) & ~on | (p_drv < em_lo) & ~on
    if np.any(bad):
        k = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise InfeasibleStage(f"empty motor power interval at stage {k}", stage=k)

    u_lo = np.maximum(pb_lo, battery_power(c, batt, mot_lo))
    u_hi = np.minimum(pb_hi, battery_power(c, batt, mot_hi))
    off_g = battery_power(c, batt, np.where(on, 0.0, p_drv))
    off_bad = ~on & ((off_g < pb_lo) | (off_g > pb_hi))
    bad = np.atleast_1d((u_lo > u_hi) & on | off_bad)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise InfeasibleStage(f"empty battery power interval at stage {k}", stage=k)
    u_lo = np.where(on, u_lo, off_g)
    u_hi = np.where(on, u_hi, off_g)
    return _out(u_lo), _out(u_hi)


def stage_cost_eval(c: StageCoefficients, batt: BatteryConstants, delta: float, u) -> StageCost:
    """Stage fuel cost ``delta * f(p_drv - g^{-1}(u))`` with exact derivatives.

    At a tightened lower bound sitting on the motor-map vertex the inverse
    battery map has infinite slope; gradient and hessian are then -inf/+inf.
    """
    u = np.asarray(u, dtype=float)
    rad, scale = _inverse_radicand(c, batt, u)
    rad = _clamp(rad, scale, "stage_cost_eval")
    q = np.sqrt(rad)
    p_eng = c.p_drv + c.b1 / (2.0 * c.b2) - q

    d_rad = (1.0 - 2.0 * batt.r_int * u / batt.v_oc**2) / c.b2
    dd_rad = -2.0 * batt.r_int / (c.b2 * batt.v_oc**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dq = d_rad / (2.0 * q)
        ddq = dd_rad / (2.0 * q) - d_rad**2 / (4.0 * q**3)
    df = 2.0 * c.a2 * p_eng + c.a1

    value = delta * ((c.a2 * p_eng + c.a1) * p_eng + c.a0)
    grad = -delta * df * dq
    hess = delta * (2.0 * c.a2 * dq**2 - df * ddq)
    on = np.asarray(c.engine_on, dtype=bool)
    return StageCost(
        value=_out(np.where(on, value, 0.0)),
        gradient=_out(np.where(on, grad, 0.0)),
        hessian=_out(np.where(on, hess, 0.0)),
    )


def total_cost(inst, u):
    """Separable cost ``F(u)``; returns value, gradient and hessian diagonal."""
    sc = stage_cost_eval(inst.coeffs, inst.batt, inst.delta, np.asarray(u, dtype=float))
    g = np.atleast_1d(sc.gradient)
    h = np.atleast_1d(sc.hessian)
    return float(np.sum(sc.value)), g, h


def cost_value(inst, u) -> float:
    return total_cost(inst, u)[0]
