"""Exception taxonomy shared across the package.

Two broad classes matter for the CLI exit codes: bad inputs or
configuration (:class:`ValidationError`, exit code 2) and numerical
failures encountered with valid inputs (:class:`NumericalError`,
exit code 3).
"""


class ValidationError(ValueError):
    """Invalid argument, parameter range, shape, or configuration."""


class NumericalError(RuntimeError):
    """A numerical procedure failed on otherwise valid inputs."""


class FitFailure(NumericalError):
    """An iterative fit did not converge.

    Carries the best parameters and residual reached so callers can
    inspect how close the fit got.
    """

    def __init__(self, message, best_params=None, residual=None):
        super().__init__(message)
        self.best_params = best_params
        self.residual = residual


class DivergenceError(NumericalError):
    """Network training or inference produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CorruptionError(NumericalError):
    """A persisted file failed its integrity check."""


class MigrationError(ValidationError):
    """A persisted file carries an unsupported format version."""
