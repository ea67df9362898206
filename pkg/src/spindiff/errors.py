"""Exception hierarchy. Every error carries a CLI exit code."""


class SpindiffError(Exception):
    exit_code = 1


class InvalidInputError(SpindiffError, ValueError):
    exit_code = 2


class ConfigError(InvalidInputError):
    exit_code = 2


class SingularGeometryError(InvalidInputError):
    """Coincident positions (donor/site or site/site)."""


class CapacityError(SpindiffError):
    exit_code = 5


class ConvergenceError(SpindiffError):
    """Raised when a fit does not converge; ``last`` holds the final iterate."""

    exit_code = 4

    def __init__(self, message, last=None, iterations=0):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


IO_EXIT_CODE = 3
