"""Exception hierarchy shared across the package.

The CLI maps ``IdsplitError`` subclasses to exit code 2 (data errors) and
anything else to exit code 3 (internal faults).
"""


class IdsplitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IdsplitError):
    """Invalid configuration value (bad depth, hidden size, flag combination)."""


class DatasetFormatError(IdsplitError):
    """Malformed dataset file. Carries a 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SourceDecodeError(IdsplitError):
    """Source file is not valid UTF-8. Names the offending byte offset."""

    def __init__(self, path, byte_offset):
        super().__init__(f"{path}: invalid UTF-8 at byte offset {byte_offset}")
        self.path = path
        self.byte_offset = byte_offset


class FrequencyFileError(IdsplitError):
    """Malformed frequency table file. Carries a 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeMismatchError(IdsplitError):
    """Tensor shapes inconsistent with the declared architecture."""


class NonFiniteError(IdsplitError):
    """A NaN or Inf appeared where only finite values are allowed."""


class CheckpointError(IdsplitError):
    """Corrupt, truncated, or incompatible model checkpoint."""
