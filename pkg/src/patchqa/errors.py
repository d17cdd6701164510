"""Exception hierarchy shared by every subpackage."""


class PatchQAError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PatchQAError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(PatchQAError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(PatchQAError, ValueError):
    """A configuration is inconsistent or references unknown keys."""


class DegenerateCloudError(PatchQAError, ValueError):
    """The cloud has no spatial extent."""


class ParseError(PatchQAError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ManifestError(PatchQAError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class CheckpointError(PatchQAError, ValueError):
    """A checkpoint file is malformed or has an unexpected version."""
