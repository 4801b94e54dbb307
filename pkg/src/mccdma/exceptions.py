"""Exception hierarchy.

Every error raised by the package derives from :class:`MCCDMAError`, which
is itself a :class:`ValueError` so callers that only care about bad input
can catch the builtin.
"""


class MCCDMAError(ValueError):
    """Base class for all package errors."""


# codes
class ZeroSeedError(MCCDMAError):
    pass


class NonMaximalPolynomialError(MCCDMAError):
    pass


class NotPowerOfTwoError(MCCDMAError):
    pass


class LengthMismatchError(MCCDMAError):
    pass


# waveform
class OddBitCountError(MCCDMAError):
    pass


class BadGuardError(MCCDMAError):
    pass


class DegenerateWeightsError(MCCDMAError):
    pass


# channel
class TooManyTapsError(MCCDMAError):
    pass


class DimensionMismatchError(MCCDMAError):
    pass


# estimation
class TooShortError(MCCDMAError):
    pass


class SingularGramError(MCCDMAError):
    pass


class SingularCorrelationError(MCCDMAError):
    pass


class NonPositiveSnrError(MCCDMAError):
    pass


class NotDivisibleError(MCCDMAError):
    pass


class TooFewPilotsError(MCCDMAError):
    pass


class BadTapCountError(MCCDMAError):
    pass


# configuration / cli
class ConfigError(MCCDMAError):
    pass


class UnknownKeyError(ConfigError):
    pass


class BadValueError(ConfigError):
    pass


class MissingRequiredError(ConfigError):
    pass


class IoFailureError(MCCDMAError):
    pass


class SimulationError(MCCDMAError):
    """A module error raised inside a Monte-Carlo trial, with its context."""

    def __init__(self, message, *, snr_db=None, trial=None, stage=None):
        super().__init__(message)
        self.snr_db = snr_db
        self.trial = trial
        self.stage = stage

    def __str__(self):
        base = super().__str__()
        return f"{base} (snr_db={self.snr_db}, trial={self.trial}, stage={self.stage})"
