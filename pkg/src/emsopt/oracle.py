"""Reference solvers and derivative checkers for tests.

Nothing here touches the solver modules. The dynamic program builds its own
reachability tubes and evaluates stage costs only through ``model``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import GridTooCoarse, Infeasible
from .model import cost_value, stage_cost_eval


@dataclass(frozen=True)
class DpGrid:
    state_points: int = 101
    control_points: int = 101
    refine_iters: int = 30
    # passes on shrinking windows around the previous rollout trajectory
    passes: int = 4
    window_cells: float = 8.0

    def __post_init__(self):
        if self.state_points < 2 or self.control_points < 2:
            raise ValueError("grids need at least two points per dimension")

    def refined(self) -> "DpGrid":
        return replace(self, state_points=2 * self.state_points - 1, control_points=2 * self.control_points - 1)


def _tubes(inst, box_lo=None, box_hi=None):
    """Forward reachable and backward viable intervals, steps 0..N.

    ``box_lo``/``box_hi`` optionally restrict each step further (length N+1).
    """
    n, d = inst.n, inst.delta
    box_lo = np.full(n + 1, inst.x_lo) if box_lo is None else np.maximum(box_lo, inst.x_lo)
    box_hi = np.full(n + 1, inst.x_hi) if box_hi is None else np.minimum(box_hi, inst.x_hi)
    lo = np.empty(n + 1)
    hi = np.empty(n + 1)
    lo[0] = hi[0] = inst.x0
    for k in range(n):
        lo[k + 1] = max(box_lo[k + 1], lo[k] - d * inst.u_hi[k])
        hi[k + 1] = min(box_hi[k + 1], hi[k] - d * inst.u_lo[k])
        if lo[k + 1] > hi[k + 1]:
            raise Infeasible(f"no feasible state at step {k + 1}", step=k + 1)
    for k in range(n - 1, -1, -1):
        lo[k] = max(lo[k], lo[k + 1] + d * inst.u_lo[k])
        hi[k] = min(hi[k], hi[k + 1] + d * inst.u_hi[k])
        if lo[k] > hi[k]:
            raise Infeasible(f"no feasible state at step {k}", step=k)
    return lo, hi


class _Dp:
    def __init__(self, inst, grid, lo, hi):
        self.inst = inst
        self.grid = grid
        self.lo, self.hi = lo, hi
        self.xs = [np.linspace(self.lo[k], self.hi[k], grid.state_points) for k in range(inst.n + 1)]
        self.values = [None] * (inst.n + 1)
        self.values[inst.n] = np.zeros(grid.state_points)
        for k in range(inst.n - 1, -1, -1):
            self.values[k] = self._backup(k, self.xs[k])[0]

    def _controls(self, k, x):
        """Control grid per state: bounds intersected with the next viable interval."""
        inst, d = self.inst, self.inst.delta
        lo = np.maximum(inst.u_lo[k], (x - self.hi[k + 1]) / d)
        hi = np.minimum(inst.u_hi[k], (x - self.lo[k + 1]) / d)
        hi = np.maximum(hi, lo)  # rounding only; the tubes are mutually viable
        t = np.linspace(0.0, 1.0, self.grid.control_points)
        return lo[:, None] + (hi - lo)[:, None] * t[None, :]

    def _objective(self, k, x, u):
        stage = stage_cost_eval(self.inst.stages[k], self.inst.batt, self.inst.delta, u).value
        nxt = np.clip(x[:, None] - self.inst.delta * u, self.lo[k + 1], self.hi[k + 1])
        if self.hi[k + 1] > self.lo[k + 1]:
            future = np.interp(nxt, self.xs[k + 1], self.values[k + 1])
        else:
            future = np.full_like(nxt, self.values[k + 1][0])
        return stage + future

    def _backup(self, k, x):
        """Minimize stage cost plus interpolated cost-to-go for each state.

        A grid scan brackets the minimizer; golden-section search refines it
        inside the two neighbouring cells. The objective is convex in u
        (convex stage cost plus a piecewise-linear interpolant of convex
        samples), so the refinement does not leave the global minimum.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = self._controls(k, x)
        total = self._objective(k, x, u)
        rows = np.arange(x.size)
        j = np.argmin(total, axis=1)
        m = u.shape[1] - 1
        a = u[rows, np.maximum(j - 1, 0)]
        b = u[rows, np.minimum(j + 1, m)]
        best_u = u[rows, j]
        best = total[rows, j]
        ratio = (np.sqrt(5.0) - 1.0) / 2.0
        for _ in range(self.grid.refine_iters):
            c = b - ratio * (b - a)
            d = a + ratio * (b - a)
            fc = self._objective(k, x, c[:, None])[:, 0]
            fd = self._objective(k, x, d[:, None])[:, 0]
            left = fc <= fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
        mid = 0.5 * (a + b)
        fm = self._objective(k, x, mid[:, None])[:, 0]
        better = fm < best
        return np.where(better, fm, best), np.where(better, mid, best_u)

    def rollout(self):
        x = self.inst.x0
        u = np.empty(self.inst.n)
        for k in range(self.inst.n):
            u[k] = self._backup(k, x)[1][0]
            x = min(max(x - self.inst.delta * u[k], self.lo[k + 1]), self.hi[k + 1])
        return u


def _iterative_dp(inst, grid):
    lo, hi = _tubes(inst)
    u = None
    for _ in range(grid.passes):
        dp = _Dp(inst, grid, lo, hi)
        u = dp.rollout()
        x = np.concatenate([[inst.x0], inst.x0 - inst.delta * np.cumsum(u)])
        half = grid.window_cells * (hi - lo) / (grid.state_points - 1)
        # the previous rollout lies in every window, so the restricted tube is non-empty
        lo, hi = _tubes(inst, x - half, x + half)
    return u


def dp_solve(inst, grid: DpGrid | None = None, *, cap: int = 50, refine_tol: float = 5e-3):
    """Value-iteration reference: returns ``(u_ref, cost_ref)``.

    The first pass grids the whole viable tube; later passes re-grid narrow
    windows around the previous greedy rollout. ``cost_ref`` is the true
    cost of the final rollout, so it bounds the optimum from above. The solve
    is repeated on a doubled grid and GridTooCoarse is raised when the two
    costs differ by more than ``refine_tol`` relative; the finer result is
    returned.
    """
    if inst.n > cap:
        raise ValueError(f"horizon {inst.n} exceeds the oracle cap {cap}")
    grid = grid or DpGrid()
    coarse = _iterative_dp(inst, grid)
    fine = _iterative_dp(inst, grid.refined())
    c_coarse = cost_value(inst, coarse)
    c_fine = cost_value(inst, fine)
    scale = max(abs(c_fine), 1e-12)
    if abs(c_coarse - c_fine) > refine_tol * scale:
        raise GridTooCoarse(
            f"grid refinement moved the cost from {c_coarse:.6g} to {c_fine:.6g}"
        )
    return fine, float(c_fine)


def fd_check(f, grad, points, step) -> float:
    """Worst relative error between ``grad`` and central differences of ``f``.

    1-D ``points`` are treated as independent scalar arguments of
    elementwise functions. 2-D ``points`` (m, d) are m evaluation points of a
    scalar function of d variables.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        fd = (np.asarray(f(pts + step)) - np.asarray(f(pts - step))) / (2 * step)
        g = np.asarray(grad(pts), dtype=float)
    else:
        fd = np.empty_like(pts)
        g = np.empty_like(pts)
        eye = np.eye(pts.shape[1])
        for i, p in enumerate(pts):
            g[i] = grad(p)
            for j in range(pts.shape[1]):
                fd[i, j] = (f(p + step * eye[j]) - f(p - step * eye[j])) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), np.finfo(float).tiny)
    err = np.where(g == fd, 0.0, np.abs(g - fd) / denom)
    return float(np.max(err))
