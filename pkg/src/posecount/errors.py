"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems (parsing, validation,
missing inputs) exit 2, numeric failures (non-finite values, failed
gradient checks) exit 3.
"""


class PoseCountError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PoseCountError):
    """A configuration violates one of its invariants."""


class ParseError(PoseCountError):
    """A data file does not conform to its CSV schema."""


class ValidationError(PoseCountError):
    """Parsed data violates a semantic constraint (ordering, ranges, ids)."""


class DataError(PoseCountError):
    """A referenced resource is missing or inconsistent (video, frame, class)."""


class DegeneratePoseError(PoseCountError):
    """All keypoints of a frame coincide; the pose cannot be normalized."""


class ShapeError(PoseCountError):
    """Operands passed to a numeric primitive have incompatible shapes."""


class NumericError(PoseCountError):
    """A non-finite value appeared where a finite one is required."""


class GradientCheckError(PoseCountError):
    """Reverse-mode and finite-difference gradients disagree."""
