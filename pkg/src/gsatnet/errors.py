"""Exception hierarchy shared across the package.

Exit codes mirror the CLI contract: 2 for configuration problems,
3 for data problems, 4 for numeric failures.
"""


class GsatNetError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(GsatNetError):
    """Invalid configuration value, flag, or config-file key."""

    exit_code = 2


class DataError(GsatNetError):
    """Problem with an input dataset or artifact file."""

    exit_code = 3


class ParseError(DataError):
    """Malformed text in a dataset file; carries file and line context."""

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class SchemaError(DataError):
    """Structurally valid file whose contents violate the expected schema."""


class IntegrityError(DataError):
    """Internally inconsistent data (dangling references, bad checksums)."""


class NumericError(GsatNetError):
    """Training produced NaN/Inf or another unrecoverable numeric state."""

    exit_code = 4


class IsolatedNodeError(GsatNetError):
    """A random walk was requested from a node with no neighbors.

    Callers that tolerate isolated nodes catch this and substitute the
    degenerate single-node walk.
    """


class EnumerationLimitError(GsatNetError):
    """Exact walk enumeration would exceed the configured budget.

    Callers should fall back to Monte Carlo estimation.
    """
