"""Exception types shared across the package.

Every failure mode raised by library code is a named subclass so callers
can catch precisely.  Validation errors derive from ValueError, capacity
and state errors from RuntimeError.
"""


class PrefMorlError(Exception):
    """Base class for all package-specific errors."""


class BadDimension(PrefMorlError, ValueError):
    """Objective count or vector length is out of the supported range."""


class NegativeComponent(PrefMorlError, ValueError):
    """A weight component is negative."""


class NotNormalized(PrefMorlError, ValueError):
    """Weight components do not sum to one within tolerance."""


class LengthMismatch(PrefMorlError, ValueError):
    """Per-step data does not match the segment length."""


class DimensionMismatch(PrefMorlError, ValueError):
    """Two vectors that must share a dimension do not."""


class BadLabel(PrefMorlError, ValueError):
    """Preference label outside {0, 0.5, 1}."""


class InvalidCell(PrefMorlError, ValueError):
    """Environment stepped from a terminal or out-of-bounds state."""


class ActionOutOfRange(PrefMorlError, ValueError):
    """Continuous action magnitude exceeds the configured bound."""


class MissingGroundTruth(PrefMorlError, ValueError):
    """Scripted preference requested without per-step true rewards."""


class BadBound(PrefMorlError, ValueError):
    """Nonpositive gap or reward bound in a segment-length computation."""


class EmptyBuffer(PrefMorlError, RuntimeError):
    """Sampling from a buffer with no entries."""


class EmptyBatch(PrefMorlError, ValueError):
    """An operation received an empty batch."""


class InsufficientData(PrefMorlError, RuntimeError):
    """Buffer does not contain enough eligible segments."""


class EncodingError(PrefMorlError, ValueError):
    """State or action cannot be encoded for the active environment."""


class TooLarge(PrefMorlError, ValueError):
    """Policy enumeration would exceed the requested bound."""


class InsufficientHorizon(PrefMorlError, ValueError):
    """Segment length too short for a sound frontier comparison."""


class BadReference(PrefMorlError, ValueError):
    """A frontier point lies below the hypervolume reference point."""


class QueueFull(PrefMorlError, RuntimeError):
    """Preference query queue is at capacity."""


class UnknownQuery(PrefMorlError, KeyError):
    """Label submitted for a query id that was never enqueued."""


class AlreadyAnswered(PrefMorlError, RuntimeError):
    """Conflicting label submitted for an answered query."""


class ConfigError(PrefMorlError, ValueError):
    """Malformed configuration file or unknown field."""
