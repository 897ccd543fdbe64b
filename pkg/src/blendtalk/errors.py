"""Exception hierarchy.

Three branches matter to the CLI: ConfigError (exit 2), DataError (exit 3),
and everything else under BlendtalkError (exit 4).
"""


class BlendtalkError(Exception):
    pass


class ConfigError(BlendtalkError):
    pass


class DataError(BlendtalkError):
    pass


# --- dataset / file errors ---------------------------------------------------

class MissingColumn(DataError):
    pass


class ValueOutOfRange(DataError):
    pass


class NonMonotonicTimecode(DataError):
    pass


class TooShort(DataError):
    pass


class UnknownChannel(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAudio(DataError):
    pass


class OrphanFile(DataError):
    pass


class TooFewSubjects(DataError):
    pass


class InsufficientGenderCoverage(DataError):
    pass


class IoFailure(DataError):
    pass


class ClipTooShort(DataError):
    pass


class NoTextSource(DataError):
    pass


class BadMagic(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class UnknownStyle(DataError):
    pass


# --- runtime errors ----------------------------------------------------------

class DimensionMismatch(BlendtalkError):
    pass


class LengthMismatch(BlendtalkError):
    pass


class ShapeMismatch(BlendtalkError):
    pass


class ZeroVector(BlendtalkError):
    pass


class ProviderFailure(BlendtalkError):
    pass


class DivergedLoss(BlendtalkError):
    pass
