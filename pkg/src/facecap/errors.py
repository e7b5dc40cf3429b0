"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError (and plain I/O errors)
exit with 1, NumericalError with 2.
"""


class FacecapError(Exception):
    """Base class for all package errors."""


class ValidationError(FacecapError):
    """Malformed input: bad files, inconsistent shapes, violated invariants."""


class ParseError(ValidationError):
    """File-level parse failure; message carries the offending line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class NumericalError(FacecapError):
    """Numerical failure, e.g. a rank-deficient least-squares system."""
