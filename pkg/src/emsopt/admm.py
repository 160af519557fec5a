"""ADMM splitting for the battery-power MPC problem.

The splitting introduces ``zeta = -u`` and ``x = x0 + Psi zeta`` so that the
control bounds, the state bounds and the coupling each become cheap:

* u-update: N independent scalar convex problems (safeguarded Newton),
* x-update: a clip onto the state box,
* zeta-update: one solve with the constant matrix ``rho1 I + rho2 Psi^T Psi``,
  factorized once per (N, delta, rho1, rho2),
* scaled dual updates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dpotrs as _potrs

from . import _kernels
from .errors import IterationLimit, SubSolverStall
from .problem import ProblemInstance, psi, psi_t, state_trajectory
from .report import SolveReport


@dataclass(frozen=True)
class AdmmConfig:
    rho1: float = 6e-5
    rho2: float = 4e-7
    epsilon: float = 4e3
    max_iters: int = 5000
    newton_tol: float = 1e-9
    newton_max: int = 100
    backtrack_c: float = 1e-4
    backtrack_beta: float = 0.5
    backtrack_max: int = 50

    def __post_init__(self):
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise ValueError("penalty weights must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class AdmmState:
    u: np.ndarray
    x: np.ndarray
    zeta: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    r_p: float = np.inf
    r_d: float = np.inf


def psi_gram(n: int, delta: float) -> np.ndarray:
    """Dense ``Psi^T Psi``; entry (i, j) is ``delta^2 (n - max(i, j))``."""
    idx = np.arange(n)
    return delta**2 * (n - np.maximum(idx[:, None], idx[None, :])).astype(float)


@dataclass(frozen=True)
class ZetaFactor:
    n: int
    delta: float
    rho1: float
    rho2: float
    cho: tuple

    def solve(self, rhs):
        # direct LAPACK call; cho_solve's argument checking dominates at small N
        x, info = _potrs(self.cho[0], rhs, lower=1)
        if info != 0:
            raise ValueError(f"potrs failed with info={info}")
        return x


@lru_cache(maxsize=16)
def _zeta_factor(n, delta, rho1, rho2):
    m = rho1 * np.eye(n) + rho2 * psi_gram(n, delta)
    return ZetaFactor(n, delta, rho1, rho2, scipy.linalg.cho_factor(m, lower=True, check_finite=False))


def precompute_zeta_factor(inst: ProblemInstance, rho1: float, rho2: float) -> ZetaFactor:
    return _zeta_factor(inst.n, float(inst.delta), float(rho1), float(rho2))


def initialize(inst: ProblemInstance) -> AdmmState:
    u = inst.u_hi.copy()
    zeta = -u
    traj = inst.x0 + psi(inst, zeta)
    x = np.clip(traj, inst.x_lo, inst.x_hi)
    return AdmmState(u=u, x=x, zeta=zeta, lambda1=np.zeros(inst.n), lambda2=traj - x)


def update_u(inst: ProblemInstance, state: AdmmState, rho1: float, config: AdmmConfig | None = None) -> np.ndarray:
    """Minimize ``F_k(u) + rho1/2 (u + zeta_k + lambda1_k)^2`` for every stage.

    For a scalar convex function, clipping the unconstrained minimizer onto
    ``[u_lo_k, u_hi_k]`` equals minimizing over that interval, so each Newton
    iteration is kept inside a shrinking bracket (bisection when the Newton
    point leaves it) and never leaves the model's domain. Engine-off stages
    take ``u_hi``. Stages are independent.
    """
    cfg = config or AdmmConfig()
    c = inst.coeffs
    out = np.empty(inst.n)
    stalled = _kernels.u_update(
        c.a2, c.a1, c.a0, c.b2, c.b1, c.b0, c.p_drv, c.engine_on,
        float(inst.batt.v_oc), float(inst.batt.r_int), float(inst.delta),
        inst.u_lo, inst.u_hi, -state.zeta - state.lambda1, state.u,
        float(rho1), cfg.newton_tol, cfg.newton_max, cfg.backtrack_c, cfg.backtrack_beta, cfg.backtrack_max, out,
    )
    if stalled >= 0:
        raise SubSolverStall(f"scalar u-update not stationary at stage {stalled} after {cfg.newton_max} iterations")
    return out


def update_x(inst: ProblemInstance, state: AdmmState) -> np.ndarray:
    return np.clip(inst.x0 + psi(inst, state.zeta) + state.lambda2, inst.x_lo, inst.x_hi)


def update_zeta(inst: ProblemInstance, state: AdmmState, factor: ZetaFactor) -> np.ndarray:
    rhs = -factor.rho1 * (state.u + state.lambda1) - factor.rho2 * psi_t(inst, inst.x0 - state.x + state.lambda2)
    return factor.solve(rhs)


def update_duals(inst: ProblemInstance, state: AdmmState):
    lam1 = state.lambda1 + state.u + state.zeta
    lam2 = state.lambda2 + inst.x0 + psi(inst, state.zeta) - state.x
    return lam1, lam2


def residuals(inst: ProblemInstance, zeta_prev, state: AdmmState, rho1: float, rho2: float):
    """Euclidean norms of the primal and dual residuals."""
    rp = np.sqrt(np.sum((state.u + state.zeta) ** 2) + np.sum((psi(inst, state.zeta) + inst.x0 - state.x) ** 2))
    dz = zeta_prev - state.zeta
    rd = np.sqrt(np.sum((rho1 * dz) ** 2) + np.sum((rho2 * psi(inst, dz)) ** 2))
    return float(rp), float(rd)


def iterate(inst: ProblemInstance, state: AdmmState, factor: ZetaFactor, config: AdmmConfig) -> AdmmState:
    """One full ADMM sweep (fused form of the individual updates)."""
    u = update_u(inst, state, config.rho1, config)
    x = np.empty(inst.n)
    rhs = np.empty(inst.n)
    d = float(inst.delta)
    _kernels.x_and_zeta_rhs(float(inst.x0), float(inst.x_lo), float(inst.x_hi), d, factor.rho1, factor.rho2,
                            u, state.zeta, state.lambda1, state.lambda2, x, rhs)
    zeta = factor.solve(rhs)
    lam1 = state.lambda1.copy()
    lam2 = state.lambda2.copy()
    r_p, r_d = _kernels.duals_and_residuals(float(inst.x0), d, config.rho1, config.rho2,
                                            u, x, state.zeta, zeta, lam1, lam2)
    return AdmmState(u=u, x=x, zeta=zeta, lambda1=lam1, lambda2=lam2, r_p=r_p, r_d=r_d)


def iterate_reference(inst: ProblemInstance, state: AdmmState, factor: ZetaFactor, config: AdmmConfig) -> AdmmState:
    """The same sweep composed from the individual update functions."""
    u = update_u(inst, state, config.rho1, config)
    x = update_x(inst, state)
    mid = AdmmState(u=u, x=x, zeta=state.zeta, lambda1=state.lambda1, lambda2=state.lambda2)
    zeta = update_zeta(inst, mid, factor)
    new = AdmmState(u=u, x=x, zeta=zeta, lambda1=state.lambda1, lambda2=state.lambda2)
    new.lambda1, new.lambda2 = update_duals(inst, new)
    new.r_p, new.r_d = residuals(inst, state.zeta, new, config.rho1, config.rho2)
    return new


def solve(inst: ProblemInstance, config: AdmmConfig | None = None, *, fixed_iters: int | None = None,
          record_iterates=False) -> SolveReport:
    """Run ADMM until both residual norms are at most epsilon.

    With ``fixed_iters`` the termination test is ignored and exactly that
    many iterations are run.
    """
    cfg = config or AdmmConfig()
    _kernels.warmup()
    t0 = time.perf_counter()
    factor = precompute_zeta_factor(inst, cfg.rho1, cfg.rho2)
    state = initialize(inst)
    setup = time.perf_counter() - t0
    report = SolveReport(solver="admm", u=state.u, x=state.x, iterations=0, setup_time=setup,
                         zeta=state.zeta, iterates=[state.u.copy()] if record_iterates else None)
    cap = fixed_iters if fixed_iters is not None else cfg.max_iters
    best = (np.inf, state)
    for j in range(1, cap + 1):
        t0 = time.perf_counter()
        state = iterate(inst, state, factor, cfg)
        report.iter_times.append(time.perf_counter() - t0)
        report.residual_pairs.append((state.r_p, state.r_d))
        report.residuals.append(max(state.r_p, state.r_d))
        if record_iterates:
            report.iterates.append(state.u.copy())
        if max(state.r_p, state.r_d) < best[0]:
            best = (max(state.r_p, state.r_d), state)
        if fixed_iters is None and state.r_p <= cfg.epsilon and state.r_d <= cfg.epsilon:
            break
    else:
        if fixed_iters is None:
            s = best[1]
            report.u, report.x, report.zeta, report.iterations = s.u, s.x, s.zeta, cap
            report.termination = "iteration_limit"
            raise IterationLimit(f"ADMM hit {cap} iterations", report=report)
    report.u, report.x, report.zeta, report.iterations = state.u, state.x, state.zeta, j
    return report
