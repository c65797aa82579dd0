"""Exception types shared across the toolchain."""

from __future__ import annotations


class SmoothforgeError(Exception):
    """Base class; every error raised deliberately by the package derives from it."""


class FormulaError(SmoothforgeError, ValueError):
    """Formula text could not be parsed or validated.

    ``offset`` is the byte offset (UTF-8) into the formula text, or ``None``
    when the problem is not tied to a position.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class DataError(SmoothforgeError, ValueError):
    """Input data is unusable for the requested model."""


class ProprietyError(SmoothforgeError, ArithmeticError):
    """A matrix that must be positive definite was not."""


class CapabilityError(SmoothforgeError):
    """The requested operation is not supported for this model."""


class SchemaError(SmoothforgeError, ValueError):
    """A persisted file does not match the expected layout."""
