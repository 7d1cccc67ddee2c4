"""Exception hierarchy shared by every module of the package."""


class GdrcError(Exception):
    """Base class for all package errors."""


class ShapeError(GdrcError, ValueError):
    pass


class RangeError(GdrcError, ValueError):
    pass


class InsufficientData(GdrcError, ValueError):
    pass


class ParseError(GdrcError, ValueError):
    """Malformed input file.  ``row`` and ``col`` are 1-based when known."""

    def __init__(self, message, row=None, col=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"col {col}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.col = col


class LabelError(GdrcError, ValueError):
    pass


class DegenerateDataset(GdrcError, ValueError):
    pass


class DegenerateSplit(GdrcError, ValueError):
    pass


class ConfigError(GdrcError, ValueError):
    """Invalid configuration; ``key`` names the offending setting."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class NumericalError(GdrcError, ArithmeticError):
    pass


class AssumptionViolated(GdrcError, ValueError):
    pass


class CertificateRequired(GdrcError, ValueError):
    pass


class SolverFailed(GdrcError, RuntimeError):
    """A conic solve ended in a status other than Optimal."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class ModelFailed(GdrcError, RuntimeError):
    pass
