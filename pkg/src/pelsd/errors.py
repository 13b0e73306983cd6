"""Exception hierarchy shared by all modules."""


class PelsdError(Exception):
    """Base class for package errors."""


class ConfigurationError(PelsdError, ValueError):
    """Invalid or incomplete run configuration."""


class SampleFormatError(PelsdError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SampleValidationError(PelsdError, ValueError):
    """Parsed records violate a sample invariant."""

    def __init__(self, message, rows=()):
        rows = list(rows)
        if rows:
            shown = ", ".join(str(r) for r in rows[:20])
            more = "" if len(rows) <= 20 else f" (+{len(rows) - 20} more)"
            message = f"{message}; offending rows: {shown}{more}"
        super().__init__(message)
        self.rows = rows


class EmptySampleError(PelsdError, ValueError):
    """The sample has no records."""


class DegenerateWeightsError(PelsdError, ValueError):
    """All relevant design weights are zero."""


class DegenerateSharesError(PelsdError, ValueError):
    """A response share needed as a divisor is zero."""


class DegenerateMomentError(PelsdError, ArithmeticError):
    """The Hajek second moment of the moment function vanishes."""


class NumericalInputError(PelsdError, ValueError):
    """Non-finite values were passed to a numerical routine."""


class QuadratureError(PelsdError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
