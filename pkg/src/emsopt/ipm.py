"""Projected primal-dual interior point method.

State bounds are handled with slacks ``s = A u - b >= 0`` and a log barrier
weighted by ``1/mu``; control bounds are enforced by projecting each Newton
update onto ``[u_lo, u_hi]``. Here

    A = [Psi; -Psi],   b = [x0 - x_hi; x_lo - x0]

so that ``A u - b = [x_hi - x; x - x_lo]`` with ``x = x0 - Psi u``. Neither
``A`` nor ``Psi`` is formed; only the 2N x 2N reduced Newton matrix is.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import Infeasible, IterationLimit, LinearSolveFailure, StrictInteriorViolation
from .model import total_cost
from .problem import ProblemInstance, feasibility_tube, psi, psi_t, state_trajectory
from .report import SolveReport


@dataclass(frozen=True)
class IpmConfig:
    mu0: float = 1e-1
    mu_bar: float = 1e5
    k_mu: float = 1e4
    tau: float = 0.995
    max_iters: int = 200

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if not self.mu_bar >= self.mu0:
            raise ValueError("mu_bar must be >= mu0")
        if not self.k_mu > 1:
            raise ValueError("k_mu must exceed 1")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")


@dataclass
class IpmState:
    u: np.ndarray
    s: np.ndarray
    theta1: np.ndarray
    mu: float
    active: np.ndarray = field(default=None)  # boolean mask over stages
    grad: np.ndarray = field(default=None, repr=False)
    hess: np.ndarray = field(default=None, repr=False)

    @property
    def free(self) -> np.ndarray:
        return ~self.active

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    @property
    def free_set(self) -> np.ndarray:
        return np.flatnonzero(~self.active)


@dataclass(frozen=True)
class NewtonStep:
    free: np.ndarray  # indices of the free set, chronological
    du: np.ndarray  # one entry per free index
    ds: np.ndarray
    dtheta: np.ndarray


# -- streaming A, b ---------------------------------------------------------

def apply_a(inst: ProblemInstance, u):
    p = psi(inst, u)
    return np.concatenate([p, -p])


def apply_a_t(inst: ProblemInstance, th):
    n = inst.n
    return psi_t(inst, th[:n] - th[n:])


def rhs_b(inst: ProblemInstance):
    n = inst.n
    return np.concatenate([np.full(n, inst.x0 - inst.x_hi), np.full(n, inst.x_lo - inst.x0)])


def slack_of(inst: ProblemInstance, u):
    """``A u - b`` evaluated directly as distances to the state bounds."""
    x = state_trajectory(inst, u)
    return np.concatenate([inst.x_hi - x, x - inst.x_lo])


# -- initialization ---------------------------------------------------------

def backward_tube(inst: ProblemInstance, tube=None):
    """Backward tube ``G_0..G_N`` inside the forward tube ``F``."""
    tube = tube or feasibility_tube(inst)
    n, d = inst.n, inst.delta
    gmax = np.empty(n + 1)
    gmin = np.empty(n + 1)
    gmax[n], gmin[n] = tube.hi[n], tube.lo[n]
    for k in range(n - 1, -1, -1):
        gmax[k] = min(gmax[k + 1] + d * inst.u_hi[k], tube.hi[k])
        gmin[k] = max(gmin[k + 1] + d * inst.u_lo[k], tube.lo[k])
    return gmin, gmax


def initialize(inst: ProblemInstance, mu0: float) -> IpmState:
    """Tube-centerline start satisfying complementarity and slack feasibility exactly."""
    tube = feasibility_tube(inst)
    if not tube.feasible:
        raise Infeasible(f"feasibility tube empty at step {tube.first_empty}", step=tube.first_empty)
    bad = np.flatnonzero((tube.hi[1:] <= inst.x_lo) | (tube.lo[1:] >= inst.x_hi))
    if bad.size:
        k = int(bad[0]) + 1
        raise StrictInteriorViolation(f"tube touches the state bound everywhere at step {k}", step=k)
    gmin, gmax = backward_tube(inst, tube)
    xc = 0.5 * (gmax + gmin)
    u = np.clip((xc[:-1] - xc[1:]) / inst.delta, inst.u_lo, inst.u_hi)
    s = apply_a(inst, u) - rhs_b(inst)
    if np.any(s <= 0):
        k = int(np.flatnonzero(s <= 0)[0]) % inst.n + 1
        raise StrictInteriorViolation(f"centerline start not strictly interior at step {k}", step=k)
    theta = 1.0 / (mu0 * s)
    state = IpmState(u=u, s=s, theta1=theta, mu=mu0)
    _refresh(inst, state)
    return state


# -- iteration pieces -------------------------------------------------------

def _refresh(inst, state):
    _, state.grad, state.hess = total_cost(inst, state.u)
    state.active = partition(inst, state.u, state.theta1, state.grad)[0]


def reduced_gradient(inst, grad, theta1):
    return grad - apply_a_t(inst, theta1)


def partition(inst: ProblemInstance, u, theta1, grad=None):
    """Active mask and free mask.

    Active: at the lower bound with positive reduced gradient, at the upper
    bound with negative reduced gradient, or pinned by an equality. Exact
    zero reduced gradients stay free.
    """
    if grad is None:
        _, grad, _ = total_cost(inst, u)
    g = reduced_gradient(inst, grad, theta1)
    active = inst.pinned | ((u == inst.u_lo) & (g > 0)) | ((u == inst.u_hi) & (g < 0))
    return active, ~active


def _at_bound(inst, u):
    return (u == inst.u_lo) | (u == inst.u_hi)


def reduced_matrix(inst, state):
    """The 2N x 2N matrix ``w H^-1 w^T + Theta^-1 S`` of the dual Newton system."""
    n = inst.n
    wmask = state.free & ~_at_bound(inst, state.u)
    hinv = np.zeros(n)
    ok = wmask & np.isfinite(state.hess)
    hinv[ok] = 1.0 / state.hess[ok]
    # (Psi diag(d) Psi^T)_ij = delta^2 * sum_{k <= min(i,j)} d_k
    c = inst.delta**2 * np.cumsum(hinv)
    idx = np.arange(n)
    p = c[np.minimum(idx[:, None], idx[None, :])]
    m = np.empty((2 * n, 2 * n))
    m[:n, :n] = p
    m[n:, n:] = p
    m[:n, n:] = -p
    m[n:, :n] = -p
    m[np.diag_indices(2 * n)] += state.s / state.theta1
    return m, wmask, hinv


def newton_step(inst: ProblemInstance, state: IpmState) -> NewtonStep:
    """Reduced Newton directions for the free set."""
    n = inst.n
    m, wmask, hinv = reduced_matrix(inst, state)
    g = reduced_gradient(inst, state.grad, state.theta1)
    g = np.where(state.free, g, 0.0)
    e = np.where(wmask, -g * hinv, 0.0)
    au_b = apply_a(inst, state.u) - rhs_b(inst)
    rhs = 1.0 / (state.mu * state.theta1) - au_b - apply_a(inst, e)
    try:
        factor = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(f"reduced Newton matrix not positive definite: {exc}") from None
    dtheta = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    if not np.all(np.isfinite(dtheta)):
        raise LinearSolveFailure("non-finite dual direction")

    wt_dtheta = np.where(wmask, apply_a_t(inst, dtheta), 0.0)
    free = state.free_set
    h = state.hess[free]
    du = np.zeros(free.size)
    ok = np.isfinite(h)
    du[ok] = -(g[free][ok] - wt_dtheta[free][ok]) / h[ok]
    du_full = np.zeros(n)
    du_full[free] = du
    ds = au_b + apply_a(inst, np.where(wmask, du_full, 0.0)) - state.s
    return NewtonStep(free=free, du=du, ds=ds, dtheta=dtheta)


def _ratio_test(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    with np.errstate(over="ignore"):
        return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def step_lengths(s, ds, theta1, dtheta, tau):
    """Fraction-to-the-boundary step lengths ``(alpha_s, alpha_theta)``."""
    return _ratio_test(np.asarray(s), np.asarray(ds), tau), _ratio_test(np.asarray(theta1), np.asarray(dtheta), tau)


def apply_update(inst: ProblemInstance, state: IpmState, step: NewtonStep, alpha_s, alpha_theta) -> IpmState:
    """Projected primal update; active stages stay on their bound."""
    u = state.u.copy()
    f = step.free
    u[f] = np.clip(u[f] + alpha_s * step.du, inst.u_lo[f], inst.u_hi[f])
    new = replace(
        state,
        u=u,
        s=state.s + alpha_s * step.ds,
        theta1=state.theta1 + alpha_theta * step.dtheta,
    )
    _refresh(inst, new)
    return new


def residual(inst: ProblemInstance, state: IpmState, mu=None) -> float:
    mu = state.mu if mu is None else mu
    g = reduced_gradient(inst, state.grad, state.theta1)[state.free]
    r1 = np.linalg.norm(g)
    r2 = np.linalg.norm(1.0 / mu - state.s * state.theta1)
    r3 = np.linalg.norm(apply_a(inst, state.u) - rhs_b(inst) - state.s)
    return float(max(r1, r2, r3))


def solve(inst: ProblemInstance, config: IpmConfig | None = None, *, record_iterates=False) -> SolveReport:
    cfg = config or IpmConfig()
    t0 = time.perf_counter()
    state = initialize(inst, cfg.mu0)
    setup = time.perf_counter() - t0
    mu = cfg.mu0
    report = SolveReport(solver="ipm", u=state.u, x=state_trajectory(inst, state.u), iterations=0,
                         setup_time=setup, iterates=[state.u.copy()] if record_iterates else None)
    best = (state.u, -np.inf, np.inf)
    for j in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        step = newton_step(inst, state)
        a_s, a_t = step_lengths(state.s, step.ds, state.theta1, step.dtheta, cfg.tau)
        state = apply_update(inst, state, step, a_s, a_t)
        r = residual(inst, state)
        done = False
        if r < 1.0 / mu:
            if mu >= cfg.mu_bar:
                done = True
            else:
                mu = min(cfg.mu_bar, cfg.k_mu * mu)
                state.mu = mu
        report.iter_times.append(time.perf_counter() - t0)
        report.residuals.append(r)
        report.mu_trace.append(mu)
        if record_iterates:
            report.iterates.append(state.u.copy())
        if (mu, -r) > (best[1], -best[2]):
            best = (state.u.copy(), mu, r)
        if done:
            report.u, report.iterations = state.u, j
            report.x = state_trajectory(inst, state.u)
            return report
    report.u, report.iterations, report.termination = best[0], cfg.max_iters, "iteration_limit"
    report.x = state_trajectory(inst, best[0])
    raise IterationLimit(f"interior point method hit {cfg.max_iters} iterations", report=report)
