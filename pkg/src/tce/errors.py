"""Exception types raised across the pipeline."""


class TCEError(Exception):
    """Base class for every error raised by this package."""


# audio_io
class NotWav(TCEError):
    pass


class UnsupportedEncoding(TCEError):
    pass


class WrongSampleRate(TCEError):
    pass


class EmptyInput(TCEError):
    pass


class IncompatibleConfig(TCEError):
    pass


# transcript
class ParseError(TCEError):
    pass


class InvariantViolation(TCEError):
    pass


class BadWindow(TCEError):
    pass


# corpus
class PoolExhausted(TCEError):
    pass


class BadLength(TCEError):
    pass


class WrongDimension(TCEError):
    pass


class ZeroVector(TCEError):
    pass


# augment / mixer
class MissingTrack(TCEError):
    pass


class NoActiveSpeaker(TCEError):
    pass


class InsufficientEnrollment(TCEError):
    pass


class NoDisjointConversation(TCEError):
    pass


class SilentGroup(TCEError):
    pass


class SpeakerLeak(TCEError):
    pass


# metrics
class ZeroReference(TCEError):
    pass


class ZeroEstimate(TCEError):
    pass


class LengthMismatch(TCEError):
    pass


class DegenerateSample(TCEError):
    pass


class EmptyList(TCEError):
    pass


# netref
class ShapeMismatch(TCEError):
    pass


class UnknownVariant(TCEError):
    pass


class WeightMismatch(TCEError):
    pass
