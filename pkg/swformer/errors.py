"""
Exception hierarchy shared by every swformer module.
"""

from __future__ import annotations

from typing import Optional


class SWFormerError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SWFormerError, ValueError):
    """Operand shapes do not line up."""


class ConfigurationError(SWFormerError, ValueError):
    """A configuration value is inconsistent with the requested operation."""


class DomainError(SWFormerError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class FormatError(SWFormerError, ValueError):
    """A binary or text payload does not follow its documented layout."""

    def __init__(self, message: str, offset: Optional[int] = None) -> None:
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class LabelRangeError(FormatError):
    """A label falls outside [0, num_classes)."""


class IngestionError(SWFormerError, ValueError):
    """An event stream violates the ingestion contract."""


class PreconditionError(SWFormerError, RuntimeError):
    """A required input (trace, layer, checkpoint) is missing."""


class UndefinedProfileError(SWFormerError, ValueError):
    """A spectrum was requested for an all-zero feature map."""


class DivergenceError(SWFormerError, RuntimeError):
    """Training produced a non-finite loss."""


class UsageError(SWFormerError):
    """Command-line misuse; reported with exit code 1."""
