"""Exception hierarchy shared by all cavityflow modules."""


class CavityFlowError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(CavityFlowError, ValueError):
    pass


class AssemblyError(CavityFlowError):
    pass


class NumericalFailure(CavityFlowError):
    """Raised when a solver cannot continue.

    ``state`` holds the last valid state when one is available.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigurationError(CavityFlowError, ValueError):
    pass


class ConsistencyError(CavityFlowError):
    pass


class OracleError(CavityFlowError):
    pass


class FitError(CavityFlowError, ValueError):
    pass


class CacheError(CavityFlowError):
    pass


class ConfigError(CavityFlowError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
