"""Exception types shared across the package, mapped to CLI exit codes."""


class ValidationError(ValueError):
    """Invalid request, argument, or configuration."""

    exit_code = 2


class FileFormatError(RuntimeError):
    """Input file that cannot be parsed or has a corrupt layout."""

    exit_code = 3


class NumericalError(ArithmeticError):
    """Computation produced non-finite values or failed to converge."""

    exit_code = 4
