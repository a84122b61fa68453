from python_rotkit.const import ExitCode


class RotkitError(Exception):
    exit_code = ExitCode.DATA_ERROR


class ConfigError(RotkitError):
    """Raised when a configuration or a policy combination is invalid."""

    exit_code = ExitCode.CONFIG_ERROR

    def __init__(self, errors: str | list[str]):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


class DataError(RotkitError):
    """Raised when input data violates a format or a representation invariant."""

    exit_code = ExitCode.DATA_ERROR


class NumericalError(RotkitError):
    """Raised when a computation fails to produce a finite, converged result."""

    exit_code = ExitCode.NUMERICAL_FAILURE


class SingularInputError(NumericalError):
    """Raised for degenerate input at which a map is undefined."""
