class EdgeViewError(Exception):
    """Base class for library errors."""


class InvalidSpecError(EdgeViewError, ValueError):
    pass


class GeometryError(EdgeViewError, ValueError):
    pass


class ParameterError(EdgeViewError, ValueError):
    pass


class InvalidInputError(EdgeViewError, ValueError):
    pass


class ExhaustedCandidatesError(EdgeViewError):
    """Raised when no candidate view angles remain."""


class UndefinedMetricError(EdgeViewError, ValueError):
    pass


class InvalidComparisonError(EdgeViewError, ValueError):
    pass


class ConfigError(EdgeViewError, ValueError):
    pass
