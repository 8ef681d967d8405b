"""
Exception hierarchy shared by estimators, oracles and commands.
"""


class FgelError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(FgelError):
    pass


class DomainError(FgelError):
    """An argument left the domain of a divergence function."""


class DegenerateDataError(FgelError):
    pass


class IllPosedError(FgelError):
    pass


class InfeasibleProblemError(FgelError):
    pass


class OptimizationError(FgelError):
    """An optimizer gave up. `trace` holds whatever progress was recorded."""

    def __init__(self, message: str, trace: list | None = None, x=None, value: float | None = None):
        super().__init__(message)
        self.trace = trace or []
        self.x = x
        self.value = value


class LineSearchError(OptimizationError):
    pass
