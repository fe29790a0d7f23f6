"""Exception hierarchy shared by all modules."""


class CapillaryError(Exception):
    """Base class for errors raised by capminmax."""


class NotOnBoundary(CapillaryError):
    pass


class ProjectionFailed(CapillaryError):
    pass


class InvalidOffset(CapillaryError):
    pass


class DanglingContactEdge(CapillaryError):
    pass


class NotTangential(CapillaryError):
    pass


class LineSearchStalled(CapillaryError):
    pass


class InsufficientNeighborhood(CapillaryError):
    pass


class IncompatibleMeshes(CapillaryError):
    pass


class EigenFailure(CapillaryError):
    pass


class RadiusTooSmall(CapillaryError):
    pass


class ScaleBelowResolution(CapillaryError):
    pass


class NotConverged(CapillaryError):
    """Raised by the free-boundary solver; carries the last residuals."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class ConfigError(CapillaryError):
    """Bad run configuration; ``line`` and ``field`` locate the problem."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
