"""Exception hierarchy shared by every blefp module."""


class BlefpError(Exception):
    """Base class for all package errors."""


class ValidationError(BlefpError, ValueError):
    """Input violates a documented precondition."""


class ConfigError(BlefpError, ValueError):
    """A run configuration could not be parsed or is inconsistent."""


class NonPowerOfTwoLength(ValidationError):
    pass


class ZeroEnergyFrame(ValidationError):
    pass


class EmptyBits(ValidationError):
    pass


class InvalidBt(ValidationError):
    pass


class InvalidImpairment(ValidationError):
    pass


class UnknownImpairmentField(ValidationError, KeyError):
    pass


class WindowExceedsFrame(ValidationError):
    pass


class ChannelOutOfRange(ValidationError):
    pass


class InvalidRanges(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class InsufficientLength(ShapeMismatch):
    pass


class LabelOutOfRange(ValidationError):
    pass


class EmptyClass(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class CountExceedsFleet(ValidationError):
    pass


class MalformedFile(BlefpError):
    pass


class NoFramesDetected(BlefpError):
    pass


class GradientMismatch(BlefpError):
    pass


class IoError(BlefpError, OSError):
    pass
