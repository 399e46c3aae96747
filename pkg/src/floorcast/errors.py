"""Exception hierarchy shared by all floorcast modules."""


class FloorcastError(Exception):
    """Base class for errors raised by floorcast."""


class DomainError(FloorcastError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SchemaError(FloorcastError, ValueError):
    """An input file or table does not match its expected schema."""


class NumericError(FloorcastError, ArithmeticError):
    """A computation failed numerically (divergence, degenerate fit, ...)."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""


class DegenerateFitError(NumericError):
    """A fit is undefined for the supplied data (e.g. zero variance)."""
