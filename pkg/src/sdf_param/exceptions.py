"""
Exception hierarchy.

The CLI maps these onto its exit codes: ``ConfigError`` -> 1,
``NumericalAbortError`` -> 2, ``FormatError`` / ``OSError`` -> 3.
"""

from typing import Optional


class SdfParamError(Exception):
    """Base class for every error raised by sdf-param."""


class ConfigError(SdfParamError):
    """Invalid or unknown configuration values."""


class FormatError(SdfParamError):
    """A file on disk does not match its declared format."""


class AtlasMismatchError(SdfParamError):
    """A texture atlas was built for a different parametric domain."""


class NumericalAbortError(SdfParamError):
    """Optimization produced non-finite values or failed to converge."""

    def __init__(self, message: str, checkpoint: Optional[str] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class DomainFitError(NumericalAbortError):
    """Parametric domain fitting could not produce a usable domain."""
