"""Exception types shared across the package."""


class GqlearnError(Exception):
    """Base class for package-specific errors."""


class InputError(GqlearnError, ValueError):
    """Invalid argument or malformed input data."""


class ParseError(InputError):
    """Unreadable dataset file; the message carries the offending line number."""


class FactorizationError(GqlearnError, RuntimeError):
    """SPD factorization failed, typically from duplicate or near-duplicate rows."""


class DegeneratePairError(GqlearnError, RuntimeError):
    """A working pair produced non-positive curvature and was rejected."""


class NoCompletedCellError(GqlearnError, RuntimeError):
    """Every grid cell timed out; no calibration result is available."""
