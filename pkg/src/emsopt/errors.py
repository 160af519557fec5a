"""Exception hierarchy shared by the solvers and the CLI."""


class EmsError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EmsError, ValueError):
    """A square-root radicand of the battery model is negative."""


class InfeasibleStage(EmsError):
    """Tightened control bounds of a single stage are empty."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class Infeasible(EmsError):
    """The feasibility tube becomes empty at some step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StrictInteriorViolation(EmsError):
    """The interior point initialization cannot produce a strictly interior start."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class LinearSolveFailure(EmsError):
    """The reduced Newton matrix is not numerically positive definite."""


class IterationLimit(EmsError):
    """Iteration cap reached. ``report`` holds the best iterate found."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SubSolverStall(EmsError):
    """Scalar u-update failed to reach stationarity."""


class ParseError(EmsError, ValueError):
    """Malformed instance document."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


class GridTooCoarse(EmsError):
    """Dynamic programming cost did not settle under grid refinement."""
