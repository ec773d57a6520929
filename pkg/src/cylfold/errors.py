"""Exception hierarchy shared by all modules."""


class CylfoldError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CylfoldError, ValueError):
    pass


class CurveError(CylfoldError, ValueError):
    """A polyline violates the almost-vertical curve invariants."""


class DiameterExceeded(CurveError):
    pass


class WindowMiss(CurveError):
    pass


class PreconditionError(CylfoldError, ValueError):
    pass


class OutOfBranch(CylfoldError, ValueError):
    pass


class NoConvergence(CylfoldError, RuntimeError):
    pass


class Unclassifiable(CylfoldError, RuntimeError):
    pass


class IterationCap(CylfoldError, RuntimeError):
    pass


class GridTooCoarse(CylfoldError, ValueError):
    pass


class EvidenceFailure(CylfoldError):
    def __init__(self, clause: str, message: str = ""):
        self.clause = clause
        super().__init__(f"{clause}: {message}" if message else clause)


class ParamError(CylfoldError, ValueError):
    pass


class CoverageFailure(CylfoldError):
    def __init__(self, point, message: str = ""):
        self.point = point
        super().__init__(f"{message} at {list(point)}" if message else f"uncovered point {list(point)}")


class ConfigError(CylfoldError, ValueError):
    pass
