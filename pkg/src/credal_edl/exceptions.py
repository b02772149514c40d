"""Exception hierarchy.

Every error raised by the library derives from :class:`CredalError`, split
into data problems (bad inputs) and numerical problems (solver failures).
The CLI maps the two branches onto distinct exit codes.
"""


class CredalError(Exception):
    """Base class for all library errors."""


class DataError(CredalError, ValueError):
    """Invalid or inconsistent input data."""


class NumericalError(CredalError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class DimensionError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NotAPmf(DataError):
    pass


class NonFinite(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class TooManyClasses(DataError):
    pass


class EmptyInput(DataError):
    pass


class SingleClass(DataError):
    pass


class MissingField(DataError):
    pass


class ShapeError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    def __init__(self, message, field=None, record=None):
        where = []
        if record is not None:
            where.append(f"record {record!r}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.field = field
        self.record = record


class InconsistentDimensions(DataError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class DegenerateCoverage(NumericalError):
    """The augmented region carries all probability mass, so d* is infinite."""

    def __init__(self, message="augmented region has full coverage; d* = inf",
                 region=None):
        super().__init__(message)
        self.region = region
