"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4, anything else -> 1.
"""


class GpnnError(Exception):
    """Base class for all package errors."""


class ConfigError(GpnnError):
    """Bad configuration: unknown key, illegal value, malformed config file."""


class DataError(GpnnError):
    """Problem with dataset or split files."""


class ParseError(DataError):
    """Malformed line in an input file; carries path and 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class DuplicateIdError(DataError):
    """A node id appears more than once in a features file."""


class ReferentialIntegrityError(DataError):
    """An index refers to a node that does not exist."""


class ValidationError(DataError):
    """A structural constraint is violated (overlapping splits, bad fractions...)."""


class ShapeError(GpnnError):
    """Incompatible tensor shapes; message names both shapes."""


class NumericError(GpnnError):
    """Non-finite values where finite ones are required."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""


class DegenerateMaskError(GpnnError):
    """A mask leaves no valid position in some row."""


class StateError(GpnnError):
    """An object was used after it was consumed (e.g. backward called twice)."""
