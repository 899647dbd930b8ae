"""Exception types shared across the pipeline.

The CLI maps these onto its exit-code contract: usage errors exit 2,
NumericError exits 3, DataError exits 4.
"""


class HivetrackError(Exception):
    """Base class for all package errors."""


class DataError(HivetrackError):
    """Malformed, missing, or inconsistent input data."""


class NumericError(HivetrackError):
    """Non-finite values or numerically invalid state during computation."""
