"""Exception hierarchy shared by every module."""


class ChaosRomError(Exception):
    """Base class for all library errors."""


class ConfigError(ChaosRomError, ValueError):
    pass


class InvalidModelError(ChaosRomError, ValueError):
    pass


class DimensionError(ChaosRomError, ValueError):
    pass


class RankDeficiencyError(ChaosRomError):
    pass


class DegenerateEigenvalueError(ChaosRomError):
    pass


class DegenerateProjectionError(ChaosRomError):
    pass


class DegenerateDimensionError(ChaosRomError):
    """A KDE input has zero spread along some coordinate."""


class SolverError(ChaosRomError):
    pass


class DivergenceError(SolverError):
    """Integration produced a non-finite state or escaped to infinity.

    ``state`` is the offending state, ``time`` the time reached and
    ``partial`` any output produced before the failure.
    """

    def __init__(self, message, state=None, time=None, partial=None):
        super().__init__(message)
        self.state = state
        self.time = time
        self.partial = partial


class NonConvergenceError(SolverError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ModelFormatError(ChaosRomError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
