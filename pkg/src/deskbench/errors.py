"""Exception hierarchy for deskbench."""


class DeskbenchError(Exception):
    """Base class for all package errors."""


class MapParseError(DeskbenchError):
    """Malformed OpenDRIVE document."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFeatureError(DeskbenchError):
    """Document uses an OpenDRIVE feature outside the supported subset."""


class TopologyError(DeskbenchError):
    """Lane links reference missing roads/lanes or break continuity."""


class GeometryError(DeskbenchError):
    """Sampled geometry is invalid (e.g. negative lane width)."""


class NoRouteError(DeskbenchError):
    """Goal not reachable from start in the lane graph."""

    def __init__(self, message, components=()):
        self.components = [sorted(c) for c in components]
        super().__init__(message)


class NumericError(DeskbenchError):
    """Non-finite numbers where finite ones are required."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class PlacementError(DeskbenchError):
    """Scenario cannot be placed on the route / map."""


class LifecycleError(DeskbenchError):
    """Operation not allowed in the current simulation state."""


class InfeasibleDetourError(DeskbenchError):
    """Not enough road width to pass an obstacle."""


class ConfigError(DeskbenchError):
    """Invalid configuration (bad values, missing penalty coefficients, ...)."""


class PartitionError(DeskbenchError):
    """Scenario segments overlap along the route."""


class LogParseError(DeskbenchError):
    """Episode log cannot be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
