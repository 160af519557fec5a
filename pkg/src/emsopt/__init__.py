"""Convex PHEV energy-management MPC solvers.

Two tailored solvers for the battery-power formulation of the energy
management problem (a projected primal-dual interior point method and an
ADMM splitting), a dynamic-programming reference solver for small
horizons, and a benchmark harness.
"""

from .errors import (
    DomainError,
    EmsError,
    GridTooCoarse,
    Infeasible,
    InfeasibleStage,
    IterationLimit,
    LinearSolveFailure,
    ParseError,
    StrictInteriorViolation,
    SubSolverStall,
)
from .model import BatteryConstants, StageCoefficients, StageCost
from .problem import (
    FeasibilityTube,
    GeneratorConfig,
    ProblemInstance,
    feasibility_tube,
    generate_random,
    state_trajectory,
    trivial_minimizer,
)
from .report import SolveReport

__version__ = "0.1.0"

__all__ = [
    "BatteryConstants",
    "DomainError",
    "EmsError",
    "FeasibilityTube",
    "GeneratorConfig",
    "GridTooCoarse",
    "Infeasible",
    "InfeasibleStage",
    "IterationLimit",
    "LinearSolveFailure",
    "ParseError",
    "ProblemInstance",
    "SolveReport",
    "StageCoefficients",
    "StageCost",
    "StrictInteriorViolation",
    "SubSolverStall",
    "feasibility_tube",
    "generate_random",
    "state_trajectory",
    "trivial_minimizer",
]
