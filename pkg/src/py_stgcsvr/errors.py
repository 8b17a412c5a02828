"""Custom exceptions raised by the STGCSVR toolkit."""

from __future__ import annotations


class StgcsvrError(Exception):
    """Base exception for all STGCSVR-related errors."""


class InvalidArgumentError(StgcsvrError):
    """Raised when an operation receives arguments of the wrong shape, range or kind."""


class DegenerateGraphError(StgcsvrError):
    """Raised when a graph operation needs edges but the station network has none."""


class InsufficientCalibrationError(StgcsvrError):
    """Raised when a conformal window or its history holds too few points."""


class ConfigError(StgcsvrError):
    """Raised when a run configuration file, key or value is invalid."""


class DataValidationError(StgcsvrError):
    """Raised when an input CSV file is malformed or inconsistent."""


class ArtifactError(StgcsvrError):
    """Raised when a model or result artifact cannot be read back."""
