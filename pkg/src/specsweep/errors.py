"""Exception types shared across the package.

The CLI maps these onto stable exit codes; library users can catch them
individually.
"""


class ConfigError(ValueError):
    """A parameter violates an operation's preconditions."""


class DimensionError(ConfigError):
    """Operands have incompatible shapes."""


class MemoryGuardError(RuntimeError):
    """A requested computation would exceed the configured memory cap."""


class UnsupportedFormatError(ValueError):
    """Input file is syntactically valid but of an unsupported flavor."""


class MatrixMarketParseError(ValueError):
    """Malformed Matrix Market content; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DenseCapError(RuntimeError):
    """Matrix too large for the dense eigendecomposition oracle."""


class FunctionSpecError(ValueError):
    """Malformed scalar-function specification string."""
