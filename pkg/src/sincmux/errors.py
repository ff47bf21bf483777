"""Exception hierarchy shared by every stage of the link."""


class SincMuxError(Exception):
    """Base class for all library errors."""


class RejectedInputError(SincMuxError, ValueError):
    """Input data violates a precondition (non-finite samples, bad timing)."""


class ConfigurationError(SincMuxError, ValueError):
    """Parameters are inconsistent with each other or with the grid."""


class AliasingError(ConfigurationError):
    """Requested bandwidth cannot be represented at the given sample rate."""


class NyquistViolationError(ConfigurationError):
    """Payload energy spills past the per-channel baseband limit B/(2N)."""


class CalibrationError(SincMuxError, RuntimeError):
    """Modulator operating-point search found no acceptable comb."""
