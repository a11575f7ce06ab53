"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, data/schema
problems exit 2, numeric divergence exits 3.
"""


class EleflowError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EleflowError):
    """Invalid model or policy configuration."""


class SchemaError(EleflowError):
    """Dataset schema is invalid or does not match the input file."""


class ParseError(EleflowError):
    """Malformed CSV input; carries a 1-based line number when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class CellError(ParseError):
    """A single cell failed to parse; carries line and column names."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message, line=line)
        self.column = column


class DataError(EleflowError):
    """Input data violates an operation's preconditions."""


class DimensionError(EleflowError):
    """Array shapes do not line up; names the offending layer if any."""


class StateError(EleflowError):
    """Operation called out of order (e.g. backward before forward)."""


class DivergedError(EleflowError):
    """Training produced a non-finite loss; carries the 1-based epoch."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
