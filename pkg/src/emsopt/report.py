"""Solver output record shared by both solvers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolveReport:
    solver: str
    u: np.ndarray
    x: np.ndarray
    iterations: int
    iter_times: list = field(default_factory=list)
    termination: str = "converged"
    residuals: list = field(default_factory=list)
    # interior point only
    mu_trace: list = field(default_factory=list)
    # ADMM only: (|r_P|, |r_D|) per iteration, plus zeta
    residual_pairs: list = field(default_factory=list)
    zeta: np.ndarray | None = None
    setup_time: float = 0.0
    # optional per-iteration control iterates (record_iterates=True)
    iterates: list | None = None

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def total_time(self) -> float:
        return float(sum(self.iter_times))

    @property
    def final_residual(self) -> float | None:
        return self.residuals[-1] if self.residuals else None

    def to_dict(self) -> dict:
        out = {
            "solver": self.solver,
            "termination": self.termination,
            "iterations": self.iterations,
            "u": [float(v) for v in self.u],
            "x": [float(v) for v in self.x],
            "iter_times": [float(t) for t in self.iter_times],
            "setup_time": float(self.setup_time),
            "residuals": [float(r) for r in self.residuals],
        }
        if self.mu_trace:
            out["mu_trace"] = [float(m) for m in self.mu_trace]
        if self.residual_pairs:
            out["residual_pairs"] = [[float(a), float(b)] for a, b in self.residual_pairs]
        if self.zeta is not None:
            out["zeta"] = [float(v) for v in self.zeta]
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
