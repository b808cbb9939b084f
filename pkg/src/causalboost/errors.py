"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit with 1,
I/O problems (``OSError``) with 2 and numerical failures with 3.
"""


class ValidationError(ValueError):
    """Input data or configuration violates a documented precondition."""


class CsvFormatError(ValidationError):
    """Malformed CSV content (ragged rows, duplicate headers, bad cells)."""


class NumericalError(ArithmeticError):
    """A computation cannot proceed on the given data (degenerate arms, etc.)."""


class OverlapWarning(UserWarning):
    """Estimated propensities hit the clipping bounds."""


class DataQualityWarning(UserWarning):
    """Zero-variance columns, empty importance subsets and similar."""
