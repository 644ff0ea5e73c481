"""Exception hierarchy. The CLI maps each class to a distinct exit code."""


class KoopaccError(Exception):
    """Base class for all library errors."""


class ParseError(KoopaccError, ValueError):
    """Unparseable option string or configuration value."""


class SnapshotFormatError(ParseError):
    """Malformed snapshot file."""


class DimensionError(KoopaccError, ValueError):
    """Shapes, sizes, ranks or indices that are inconsistent."""


class DomainError(KoopaccError, ValueError):
    """Argument outside its mathematical domain (negative sigma, dt <= 0, ...)."""


class NumericalError(KoopaccError, ArithmeticError):
    """Non-finite values, zero rank, overflow and other numerical failures."""


class DegenerateEigenfunctionError(NumericalError):
    """Eigenfunction vanishes where it has to be normalised."""
